"""Small convolutional classifier written directly in numpy.

Layer chain: [conv 3x3 same-padding + ReLU -> maxpool 2x2/2 (floor)] * k
-> flatten -> dense -> softmax. Images enter as raw 0..255 intensities and
are divided by 255 before the first layer.

Parameters live in :class:`ModelParams` as a name -> ndarray mapping:
``conv{k}.F`` with shape (out, in, 3, 3), ``conv{k}.b`` with shape (out,),
``dense.W`` with shape (L, fan_in) and ``dense.b`` with shape (L,).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyBatch, ShapeMismatch, ShapeTooSmall
from .txcore import N_CLASSES, ClassLabel, make_rng

PROB_FLOOR = 1e-12
KERNEL = 3


@dataclass(frozen=True)
class ArchConfig:
    input_rows: int = 33
    input_cols: int = 32
    conv_filters: tuple = (8, 16)
    class_count: int = N_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "conv_filters", tuple(int(f) for f in self.conv_filters))
        if self.class_count != N_CLASSES:
            raise ValueError(f"class_count must be {N_CLASSES}")
        if not self.conv_filters or min(self.conv_filters) < 1:
            raise ValueError("need at least one conv layer with >= 1 filter")
        rows, cols = self.input_rows, self.input_cols
        for _ in self.conv_filters:
            if rows < 2 or cols < 2:
                raise ValueError("input too small for the conv/pool chain")
            rows, cols = rows // 2, cols // 2

    @classmethod
    def for_images(cls, with_value: bool, conv_filters=(8, 16)) -> "ArchConfig":
        return cls(33 if with_value else 32, 32, tuple(conv_filters))

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        rows, cols = self.input_rows, self.input_cols
        for _ in self.conv_filters:
            rows, cols = rows // 2, cols // 2
        return (self.conv_filters[-1], rows, cols)

    @property
    def flatten_size(self) -> int:
        c, h, w = self.feature_shape
        return c * h * w

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {}
        in_ch = 1
        for k, out_ch in enumerate(self.conv_filters):
            shapes[f"conv{k}.F"] = (out_ch, in_ch, KERNEL, KERNEL)
            shapes[f"conv{k}.b"] = (out_ch,)
            in_ch = out_ch
        shapes["dense.W"] = (self.class_count, self.flatten_size)
        shapes["dense.b"] = (self.class_count,)
        return shapes

    def to_dict(self) -> dict:
        return {
            "input_rows": self.input_rows,
            "input_cols": self.input_cols,
            "conv_filters": list(self.conv_filters),
            "kernel": KERNEL,
            "pool": 2,
            "activation": "relu",
            "class_count": self.class_count,
        }


class _TensorSet:
    """Name -> array mapping with shape checking against an ArchConfig."""

    def __init__(self, arch: ArchConfig, tensors: dict):
        expected = arch.param_shapes()
        if set(tensors) != set(expected):
            raise ShapeMismatch(f"tensor names {sorted(tensors)} != {sorted(expected)}")
        for name, shape in expected.items():
            if tuple(np.shape(tensors[name])) != shape:
                raise ShapeMismatch(f"{name}: expected {shape}, got {np.shape(tensors[name])}")
        self.arch = arch
        self.tensors = {name: np.asarray(tensors[name]) for name in expected}

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    @property
    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors.values()])

    def check_congruent(self, other: "_TensorSet"):
        if self.arch != other.arch:
            raise ShapeMismatch("architectures differ")

    def allclose(self, other, rtol=0.0, atol=0.0) -> bool:
        return all(np.allclose(self[n], other[n], rtol=rtol, atol=atol) for n in self)

    def __eq__(self, other):
        if not isinstance(other, type(self)):
            return NotImplemented
        return self.arch == other.arch and all(np.array_equal(self[n], other[n]) for n in self)

    __hash__ = None

    def __repr__(self):
        return f"{type(self).__name__}(arch={self.arch!r}, n_params={self.n_params})"


class ModelParams(_TensorSet):
    pass


class ParamGrads(_TensorSet):
    pass


def init_model(cfg: ArchConfig, seed: int, dtype=np.float64) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = make_rng(seed, 0x1A17)
    tensors = {}
    for name, shape in cfg.param_shapes().items():
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=dtype)
            continue
        if len(shape) == 4:
            receptive = shape[2] * shape[3]
            fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
        else:
            fan_out, fan_in = shape
        a = np.sqrt(6.0 / (fan_in + fan_out))
        tensors[name] = rng.uniform(-a, a, size=shape).astype(dtype)
    return ModelParams(cfg, tensors)


# ---------------------------------------------------------------- layers
#
# Internally activations are channels-last (N, H, W, C); the public layer
# functions take and return channels-first (N, C, H, W) arrays.


def _filter_matrix(filters: np.ndarray) -> np.ndarray:
    """(out, in, 3, 3) -> (9*in, out), rows ordered (di, dj, channel)."""
    return filters.transpose(2, 3, 1, 0).reshape(-1, filters.shape[0])


def _im2col(x: np.ndarray) -> np.ndarray:
    """(N, H, W, C) -> (N, H, W, 9*C) patches of a 3x3 same-padded window."""
    n, h, w, c = x.shape
    padded = np.zeros((n, h + 2, w + 2, c), dtype=x.dtype)
    padded[:, 1:-1, 1:-1] = x
    cols = np.empty((n, h, w, KERNEL * KERNEL, c), dtype=x.dtype)
    for di in range(KERNEL):
        for dj in range(KERNEL):
            cols[:, :, :, di * KERNEL + dj] = padded[:, di:di + h, dj:dj + w]
    return cols.reshape(n, h, w, KERNEL * KERNEL * c)


def _conv_pre(x, filters, bias):
    if x.ndim != 4 or filters.ndim != 4 or x.shape[3] != filters.shape[1]:
        raise ShapeMismatch(f"input channels {x.shape[-1:]} incompatible with filters {filters.shape}")
    if bias.shape != (filters.shape[0],):
        raise ShapeMismatch(f"bias {bias.shape} does not match {filters.shape[0]} filters")
    cols = _im2col(x)
    return cols, cols @ _filter_matrix(filters) + bias


def _as_nhwc(x):
    single = x.ndim == 3
    if single:
        x = x[None]
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1)), single


def _as_nchw(x, single):
    out = x.transpose(0, 3, 1, 2)
    return out[0] if single else out


def conv_forward(x: np.ndarray, filters: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 cross-correlation followed by ReLU.

    ``x`` is (N, C, H, W) or a single (C, H, W) map.
    """
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    if x.ndim not in (3, 4):
        raise ShapeMismatch(f"conv input must be (C, H, W) or (N, C, H, W), got shape {x.shape}")
    x, single = _as_nhwc(x)
    _, z = _conv_pre(x, filters, bias)
    return _as_nchw(np.maximum(z, 0.0), single)


def _pool_quads(x):
    """The four corners of every 2x2 window, in row-major order."""
    _, h, w, _ = x.shape
    if h < 2 or w < 2:
        raise ShapeTooSmall(f"maxpool needs spatial dims >= 2, got {(h, w)}")
    h2, w2 = 2 * (h // 2), 2 * (w // 2)
    return (x[:, 0:h2:2, 0:w2:2], x[:, 0:h2:2, 1:w2:2],
            x[:, 1:h2:2, 0:w2:2], x[:, 1:h2:2, 1:w2:2])


def _pool(x):
    a, b, c, d = _pool_quads(x)
    return np.maximum(np.maximum(a, b), np.maximum(c, d))


def maxpool_forward(x: np.ndarray) -> np.ndarray:
    """2x2 stride-2 max pooling; an odd trailing row/column is dropped.

    Accepts (H, W), (C, H, W) or (N, C, H, W).
    """
    x = np.asarray(x)
    if x.ndim == 2:
        return maxpool_forward(x[None])[0]
    nhwc, single = _as_nhwc(x)
    return _as_nchw(_pool(nhwc), single)


def _pool_backward(r, pooled, dpooled):
    # ties route to the first maximum in row-major window order
    dr = np.zeros_like(r)
    taken = np.zeros(pooled.shape, dtype=bool)
    h2, w2 = 2 * pooled.shape[1], 2 * pooled.shape[2]
    for (oi, oj), corner in zip(((0, 0), (0, 1), (1, 0), (1, 1)), _pool_quads(r)):
        hit = (corner == pooled) & ~taken
        taken |= hit
        dr[:, oi:h2:2, oj:w2:2] = dpooled * hit
    return dr


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def dense_softmax_forward(features: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    features = np.asarray(features)
    single = features.ndim == 1
    feats = features.reshape(1, -1) if single else features.reshape(features.shape[0], -1)
    if feats.shape[1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ShapeMismatch(f"features of size {feats.shape[1]} vs weights {W.shape}")
    p = softmax(feats @ W.T + b)
    return p[0] if single else p


# ---------------------------------------------------------------- network


def prepare_images(model: ModelParams, images) -> np.ndarray:
    """Validate an image stack and scale it to (N, rows, cols, 1) in [0, 1]."""
    arr = np.asarray(images)
    if arr.ndim == 2:
        arr = arr[None]
    expected = (model.arch.input_rows, model.arch.input_cols)
    if arr.ndim != 3 or arr.shape[1:] != expected:
        raise ShapeMismatch(f"expected images of shape {expected}, got {arr.shape[1:]}")
    dtype = model["dense.W"].dtype
    return (arr.astype(dtype) / dtype.type(255.0))[..., None]


def _forward(model: ModelParams, x: np.ndarray, keep: bool):
    """Forward pass over channels-last input. Features flatten in (row, col, channel) order."""
    cache = []
    a = x
    for k in range(len(model.arch.conv_filters)):
        cols, z = _conv_pre(a, model[f"conv{k}.F"], model[f"conv{k}.b"])
        r = np.maximum(z, 0.0)
        pooled = _pool(r)
        if keep:
            cache.append((a.shape, cols, z, r, pooled))
        a = pooled
    feats = a.reshape(a.shape[0], -1)
    logits = feats @ model["dense.W"].T + model["dense.b"]
    return feats, logits, cache


def predict_proba(model: ModelParams, images) -> np.ndarray:
    _, logits, _ = _forward(model, prepare_images(model, images), keep=False)
    return softmax(logits)


def predict_indices(model: ModelParams, images) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return predict_proba(model, images).argmax(axis=1)


def predict(model: ModelParams, img) -> ClassLabel:
    pixels = getattr(img, "pixels", img)
    return ClassLabel(int(predict_indices(model, np.asarray(pixels)[None])[0]))


def _check_batch(images, labels):
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size == 0:
        raise EmptyBatch("batch is empty")
    if np.shape(images)[0] != labels.size:
        raise ShapeMismatch("images and labels differ in length")
    if labels.min() < 0 or labels.max() >= N_CLASSES:
        raise ValueError("labels out of range")
    return labels


def _nll(probs, labels):
    p_true = probs[np.arange(labels.size), labels]
    return float(np.mean(-np.log(np.maximum(p_true, PROB_FLOOR))))


def batch_loss(model: ModelParams, images, labels) -> float:
    """Mean sparse categorical cross-entropy over the batch."""
    labels = _check_batch(images, labels)
    return _nll(predict_proba(model, images), labels)


def backward(model: ModelParams, images, labels) -> tuple[float, ParamGrads]:
    labels = _check_batch(images, labels)
    x = prepare_images(model, images)
    n = labels.size
    feats, logits, cache = _forward(model, x, keep=True)
    probs = softmax(logits)
    loss = _nll(probs, labels)

    grads = {}
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads["dense.W"] = dlogits.T @ feats
    grads["dense.b"] = dlogits.sum(axis=0)
    da = (dlogits @ model["dense.W"]).reshape(cache[-1][4].shape)

    for k in reversed(range(len(model.arch.conv_filters))):
        in_shape, cols, z, r, pooled = cache[k]
        F = model[f"conv{k}.F"]
        dz = _pool_backward(r, pooled, da) * (z > 0)
        dz_flat = dz.reshape(-1, F.shape[0])
        cols_flat = cols.reshape(-1, cols.shape[-1])
        grads[f"conv{k}.F"] = (cols_flat.T @ dz_flat).reshape(KERNEL, KERNEL, F.shape[1], F.shape[0]).transpose(3, 2, 0, 1)
        grads[f"conv{k}.b"] = dz_flat.sum(axis=0)
        if k == 0:
            break
        _, h, w, c = in_shape
        dcols = (dz_flat @ _filter_matrix(F).T).reshape(n, h, w, KERNEL * KERNEL, c)
        dpad = np.zeros((n, h + 2, w + 2, c), dtype=da.dtype)
        for di in range(KERNEL):
            for dj in range(KERNEL):
                dpad[:, di:di + h, dj:dj + w] += dcols[:, :, :, di * KERNEL + dj]
        da = dpad[:, 1:-1, 1:-1]

    grads = {name: np.ascontiguousarray(g) for name, g in grads.items()}
    return loss, ParamGrads(model.arch, grads)


# ---------------------------------------------------------------- optimizer


@dataclass(frozen=True, eq=False)
class AdamState:
    m: ParamGrads
    v: ParamGrads
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 0.001

    @classmethod
    def fresh(cls, params: ModelParams, **hyper) -> "AdamState":
        zeros = {name: np.zeros_like(t) for name, t in params.items()}
        return cls(ParamGrads(params.arch, zeros), ParamGrads(params.arch, dict(zeros)), **hyper)

    def hyperparameters(self) -> dict:
        return {"beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "lr": self.lr}


def adam_step(params: ModelParams, state: AdamState, grads: ParamGrads):
    """One bias-corrected Adam update. Returns new ``(params, state)``."""
    params.check_congruent(grads)
    params.check_congruent(state.m)
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        new_p[name] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[name] = m
        new_v[name] = v
    new_state = replace(state, m=ParamGrads(params.arch, new_m), v=ParamGrads(params.arch, new_v), step=step)
    return ModelParams(params.arch, new_p), new_state

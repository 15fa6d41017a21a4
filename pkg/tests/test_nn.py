import math

import numpy as np
import pytest

from cocnn.errors import EmptyBatch, ShapeMismatch, ShapeTooSmall
from cocnn.imaging import GreyImage, ImageMode, encode_transactions
from cocnn.modelfile import load_model, model_from_dict, model_to_dict, save_model
from cocnn.nn import (
    AdamState,
    ArchConfig,
    ModelParams,
    ParamGrads,
    adam_step,
    backward,
    batch_loss,
    conv_forward,
    dense_softmax_forward,
    init_model,
    maxpool_forward,
    predict,
    predict_indices,
    predict_proba,
    softmax,
)
from cocnn.txcore import ClassLabel
from oracles import (
    central_difference_grads,
    conv_relu_naive,
    max_relative_error,
    maxpool_naive,
    softmax_ref,
)


def _center(w):
    f = np.zeros((1, 1, 3, 3))
    f[0, 0, 1, 1] = w
    return f


def _zero_dense(model, bias):
    t = {k: v.copy() for k, v in model.items()}
    t["dense.W"][:] = 0.0
    t["dense.b"][:] = bias
    return ModelParams(model.arch, t)


# ---- init

def test_init_deterministic_and_zero_bias():
    cfg = ArchConfig()
    a, b = init_model(cfg, 3), init_model(cfg, 3)
    assert a == b and a != init_model(cfg, 4)
    for name, t in a.items():
        if name.endswith(".b"):
            assert not t.any()


def test_init_glorot_bounds():
    m = init_model(ArchConfig(), 0)
    bound = math.sqrt(6.0 / (9 * 8 + 9 * 16))
    assert np.abs(m["conv1.F"]).max() <= bound
    assert np.abs(m["conv1.F"]).max() > 0.9 * bound


def test_init_weight_mean_statistics():
    cfg = ArchConfig(input_rows=4, input_cols=4, conv_filters=(4,))
    draws = np.concatenate([init_model(cfg, s)["conv0.F"].ravel() for s in range(300)])
    assert draws.size >= 10_000
    stderr = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean()) < 3 * stderr


def test_param_count_default():
    assert init_model(ArchConfig(), 0).n_params == 80 + 1168 + 7 * 1024 + 7
    assert ArchConfig.for_images(False).feature_shape == (16, 8, 8)


def test_arch_rejects_tiny_inputs():
    with pytest.raises(ValueError):
        ArchConfig(input_rows=3, input_cols=3, conv_filters=(2, 2))


# ---- conv

def test_conv_identity_and_clamp():
    x = np.random.default_rng(0).uniform(0, 1, (1, 5, 6))
    assert np.array_equal(conv_forward(x, _center(1.0), np.zeros(1)), x)
    assert not conv_forward(x + 0.1, _center(-1.0), np.zeros(1)).any()


def test_conv_hand_sum():
    out = conv_forward(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1))
    assert out[0, 1, 1] == 9.0
    assert out[0, 0, 0] == 4.0 and out[0, 0, 1] == 6.0


def test_conv_matches_naive(rng):
    x = rng.normal(size=(3, 7, 6))
    f = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    assert np.allclose(conv_forward(x, f, b), conv_relu_naive(x, f, b), atol=1e-12)
    batch = rng.normal(size=(2, 3, 5, 5))
    out = conv_forward(batch, f, b)
    for i in range(2):
        assert np.allclose(out[i], conv_relu_naive(batch[i], f, b), atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeMismatch):
        conv_forward(np.zeros((2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))


# ---- pool

def test_pool_examples():
    assert maxpool_forward(np.array([[1, 2], [3, 4]])).tolist() == [[4]]
    x = np.arange(9).reshape(3, 3)
    assert maxpool_forward(x).tolist() == [[4]]
    assert (maxpool_forward(np.full((2, 6, 4), 7.5)) == 7.5).all()


def test_pool_matches_naive(rng):
    x = rng.normal(size=(3, 7, 9))
    assert np.array_equal(maxpool_forward(x), maxpool_naive(x))


def test_pool_too_small():
    with pytest.raises(ShapeTooSmall):
        maxpool_forward(np.zeros((1, 5)))


# ---- softmax / dense

def test_softmax_examples():
    assert np.allclose(softmax(np.zeros(7)), 1 / 7)
    assert np.allclose(softmax(np.array([math.log(2), 0.0])), [2 / 3, 1 / 3])
    logits = np.array([1.0, -3.0, 0.5])
    assert np.allclose(softmax(logits), softmax(logits + 1234.5), atol=1e-15)
    assert np.allclose(softmax(logits), softmax_ref(list(logits)))


def test_softmax_extreme_logits_stay_finite():
    p = softmax(np.array([1000.0, -1000.0, 0.0]))
    assert np.isfinite(p).all() and abs(p.sum() - 1) < 1e-9


def test_dense_softmax(rng):
    W, b = rng.normal(size=(7, 10)), rng.normal(size=7)
    feats = rng.normal(size=10)
    p = dense_softmax_forward(feats, W, b)
    assert np.allclose(p, softmax_ref(list(W @ feats + b)))
    assert abs(p.sum() - 1) < 1e-9 and ((p > 0) & (p < 1)).all()
    with pytest.raises(ShapeMismatch):
        dense_softmax_forward(np.zeros(9), W, b)


# ---- predict

def test_predict_bias_favours_fot(rng):
    model = _zero_dense(init_model(ArchConfig(), 0), np.eye(7)[3])
    for _ in range(5):
        img = GreyImage(rng.integers(0, 256, (33, 32)), ImageMode.Combined)
        assert predict(model, img) is ClassLabel.FoT


def test_predict_tie_goes_to_normal():
    model = _zero_dense(init_model(ArchConfig(), 0), 0.0)
    assert predict(model, np.zeros((33, 32))) is ClassLabel.Normal


def test_predict_agrees_with_proba(tiny_model, rng):
    imgs = rng.integers(0, 256, (30, 9, 8))
    probs = predict_proba(tiny_model, imgs)
    assert np.array_equal(predict_indices(tiny_model, imgs), probs.argmax(1))
    assert np.allclose(probs.sum(1), 1)
    assert predict(tiny_model, imgs[4]) == ClassLabel(int(probs[4].argmax()))


def test_predict_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        predict(init_model(ArchConfig(), 0), np.zeros((32, 32)))


# ---- loss

def test_loss_examples():
    model = init_model(ArchConfig(), 0)
    imgs = np.zeros((3, 33, 32))
    uniform = _zero_dense(model, 0.0)
    assert batch_loss(uniform, imgs, [0, 3, 6]) == pytest.approx(math.log(7), abs=1e-12)
    certain = _zero_dense(model, np.eye(7)[2] * 1e4)
    assert batch_loss(certain, imgs, [2, 2, 2]) == pytest.approx(0.0, abs=1e-12)
    # p(true) = e^-1: logit gap g with e^g / (e^g + 6) = e^-1  =>  g = ln(6 / (e - 1))
    gap = math.log(6 / (math.e - 1))
    one = _zero_dense(model, np.eye(7)[5] * gap)
    assert batch_loss(one, imgs[:1], [5]) == pytest.approx(1.0, abs=1e-12)


def test_loss_floor_keeps_it_finite():
    model = _zero_dense(init_model(ArchConfig(), 0), np.eye(7)[0] * 1e5)
    loss = batch_loss(model, np.zeros((1, 33, 32)), [1])
    assert loss == pytest.approx(-math.log(1e-12))


def test_empty_batch():
    model = init_model(ArchConfig(), 0)
    with pytest.raises(EmptyBatch):
        batch_loss(model, np.zeros((0, 33, 32)), [])
    with pytest.raises(EmptyBatch):
        backward(model, np.zeros((0, 33, 32)), [])


# ---- gradients

def test_dense_bias_gradient_identity(tiny_model, rng):
    img = rng.integers(0, 256, (1, 9, 8))
    _, g = backward(tiny_model, img, [4])
    p = predict_proba(tiny_model, img)[0]
    assert np.allclose(g["dense.b"], p - np.eye(7)[4], atol=1e-15)


def test_gradients_match_finite_differences(tiny_model, rng):
    imgs = rng.uniform(0, 255, (5, 9, 8))
    labels = rng.integers(0, 7, 5)
    loss, grads = backward(tiny_model, imgs, labels)
    assert loss == pytest.approx(batch_loss(tiny_model, imgs, labels), abs=1e-14)
    numeric = central_difference_grads(lambda: batch_loss(tiny_model, imgs, labels), tiny_model.tensors)
    assert max_relative_error(grads.tensors, numeric) < 1e-4


def test_gradient_mean_invariance(tiny_model, rng):
    imgs = rng.uniform(0, 255, (4, 9, 8))
    labels = rng.integers(0, 7, 4)
    l1, g1 = backward(tiny_model, imgs, labels)
    l2, g2 = backward(tiny_model, np.concatenate([imgs, imgs]), np.concatenate([labels, labels]))
    assert l1 == pytest.approx(l2, rel=1e-12)
    assert g1.allclose(g2, rtol=1e-10, atol=1e-15)


def test_backward_deterministic(tiny_model, rng):
    imgs = rng.uniform(0, 255, (6, 9, 8))
    labels = rng.integers(0, 7, 6)
    assert backward(tiny_model, imgs, labels)[1] == backward(tiny_model, imgs, labels)[1]


def test_pool_tie_routes_to_first():
    from cocnn.nn import _pool, _pool_backward
    r = np.array([[5.0, 5.0, 1.0], [5.0, 2.0, 1.0], [9.0, 9.0, 9.0]]).reshape(1, 3, 3, 1)
    pooled = _pool(r)
    dr = _pool_backward(r, pooled, np.ones_like(pooled))
    assert dr[0, :, :, 0].tolist() == [[1, 0, 0], [0, 0, 0], [0, 0, 0]]


# ---- adam

def test_adam_zero_gradient_no_change(tiny_model):
    state = AdamState.fresh(tiny_model)
    zeros = ParamGrads(tiny_model.arch, {k: np.zeros_like(v) for k, v in tiny_model.items()})
    new, st = adam_step(tiny_model, state, zeros)
    assert new == tiny_model and st.step == 1


def test_adam_first_step_unit_gradient(tiny_model):
    ones = ParamGrads(tiny_model.arch, {k: np.ones_like(v) for k, v in tiny_model.items()})
    new, st = adam_step(tiny_model, AdamState.fresh(tiny_model), ones)
    for name, p in tiny_model.items():
        assert np.allclose(p - new[name], 0.001 / (1 + 1e-8), rtol=0, atol=1e-15)
    assert st.step == 1
    again = adam_step(tiny_model, AdamState.fresh(tiny_model), ones)
    assert again[0] == new and again[1].m == st.m and again[1].v == st.v


def test_adam_hand_computed_two_steps():
    cfg = ArchConfig(input_rows=2, input_cols=2, conv_filters=(1,))
    params = ModelParams(cfg, {n: np.zeros(s) for n, s in cfg.param_shapes().items()})
    g1 = ParamGrads(cfg, {n: np.full(s, 2.0) for n, s in cfg.param_shapes().items()})
    g2 = ParamGrads(cfg, {n: np.full(s, -1.0) for n, s in cfg.param_shapes().items()})
    p, st = adam_step(params, AdamState.fresh(params), g1)
    p, st = adam_step(p, st, g2)
    m1, v1 = 0.2, 0.004
    m2, v2 = 0.9 * m1 - 0.1, 0.999 * v1 + 0.001
    step2 = 0.001 * (m2 / (1 - 0.81)) / (math.sqrt(v2 / (1 - 0.999 ** 2)) + 1e-8)
    expected = -0.001 * 1.0 / (1 + 1e-8 / 2) - step2
    assert np.allclose(p["dense.b"], expected, rtol=1e-12)


def test_adam_shape_mismatch(tiny_model):
    other = init_model(ArchConfig(), 0)
    with pytest.raises(ShapeMismatch):
        adam_step(tiny_model, AdamState.fresh(tiny_model),
                  ParamGrads(other.arch, {k: np.zeros_like(v) for k, v in other.items()}))


def test_loss_halves_after_200_steps(small_dataset):
    imgs = encode_transactions(list(small_dataset)[:50], True)
    labels = small_dataset.labels[:50]
    params = init_model(ArchConfig(), 0)
    state = AdamState.fresh(params)
    start = batch_loss(params, imgs, labels)
    for _ in range(200):
        _, g = backward(params, imgs, labels)
        params, state = adam_step(params, state, g)
    assert batch_loss(params, imgs, labels) <= 0.5 * start


# ---- model file

def test_model_file_round_trip(tmp_path, tiny_model):
    state = AdamState.fresh(tiny_model, lr=0.01)
    p = tmp_path / "m.json"
    save_model(tiny_model, p, seed=9, adam=state)
    params, adam, doc = load_model(p)
    assert params == tiny_model
    assert adam.lr == 0.01 and adam.m == state.m
    assert doc["seed"] == 9 and doc["class_order"][3] == "FoT"


def test_model_file_validates_shapes(tiny_model):
    doc = model_to_dict(tiny_model)
    doc["params"]["dense.b"]["shape"] = [8]
    with pytest.raises(ShapeMismatch):
        model_from_dict(doc)

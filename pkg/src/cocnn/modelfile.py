"""JSON model files."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError, ShapeMismatch
from .nn import AdamState, ArchConfig, ModelParams, ParamGrads
from .txcore import CLASS_NAMES

FORMAT_VERSION = 1


def _tensor_record(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _tensor_from_record(name: str, rec: dict) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in rec["shape"])
        data = np.asarray(rec["data"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"tensor {name!r} is malformed: {exc}") from exc
    if data.ndim != 1 or data.size != int(np.prod(shape)):
        raise ShapeMismatch(f"tensor {name!r}: {data.size} values do not fill shape {shape}")
    return data.reshape(shape)


def model_to_dict(params: ModelParams, seed: Optional[int] = None,
                  adam: Optional[AdamState] = None, extra: Optional[dict] = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "arch": params.arch.to_dict(),
        "class_order": list(CLASS_NAMES),
        "seed": seed,
        "params": {name: _tensor_record(t) for name, t in params.items()},
    }
    if adam is not None:
        doc["adam_state"] = {
            "step": adam.step,
            **adam.hyperparameters(),
            "m": {name: _tensor_record(t) for name, t in adam.m.items()},
            "v": {name: _tensor_record(t) for name, t in adam.v.items()},
        }
    if extra:
        doc.update(extra)
    return doc


def model_from_dict(doc: dict) -> tuple[ModelParams, Optional[AdamState], dict]:
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise DataError("unsupported or missing model format_version")
    if doc.get("class_order") != list(CLASS_NAMES):
        raise DataError(f"class_order must be {list(CLASS_NAMES)}")
    try:
        a = doc["arch"]
        arch = ArchConfig(int(a["input_rows"]), int(a["input_cols"]), tuple(a["conv_filters"]),
                          int(a.get("class_count", len(CLASS_NAMES))))
        if a.get("kernel", 3) != 3 or a.get("pool", 2) != 2 or a.get("activation", "relu") != "relu":
            raise DataError("only 3x3 kernels, 2x2 pooling and ReLU are supported")
        raw = doc["params"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"model file is malformed: {exc}") from exc
    params = ModelParams(arch, {name: _tensor_from_record(name, rec) for name, rec in raw.items()})
    adam = None
    if doc.get("adam_state"):
        st = doc["adam_state"]
        adam = AdamState(
            m=ParamGrads(arch, {n: _tensor_from_record(n, r) for n, r in st["m"].items()}),
            v=ParamGrads(arch, {n: _tensor_from_record(n, r) for n, r in st["v"].items()}),
            step=int(st["step"]), beta1=st["beta1"], beta2=st["beta2"], eps=st["eps"], lr=st["lr"],
        )
    return params, adam, doc


def save_model(params: ModelParams, path, **kwargs) -> None:
    Path(path).write_text(json.dumps(model_to_dict(params, **kwargs)) + "\n", encoding="utf-8")


def load_model(path) -> tuple[ModelParams, Optional[AdamState], dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)

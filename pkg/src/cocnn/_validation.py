"""Input checks shared by the estimators."""

import numpy as np

from .errors import DataError, ShapeMismatch
from .txcore import N_CLASSES, ClassLabel


def check_images(X, expected_shape=None):
    """Return ``X`` as a float64 ``(n, rows, cols)`` array of intensities in [0, 255]."""
    arr = np.asarray(X)
    if arr.dtype == object or arr.dtype.kind not in "uif":
        raise DataError(f"images must be numeric, got dtype {arr.dtype}")
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeMismatch(f"expected a (n, rows, cols) image stack, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise DataError("no images given")
    if expected_shape is not None and arr.shape[1:] != tuple(expected_shape):
        raise ShapeMismatch(f"images must be {tuple(expected_shape)}, got {arr.shape[1:]}")
    if arr.dtype.kind == "f" and not np.isfinite(arr).all():
        raise DataError("images contain NaN or infinity")
    if arr.min() < 0 or arr.max() > 255:
        raise DataError("pixel intensities must lie in [0, 255]")
    return arr


def check_labels(y, n_samples=None):
    """Class indices as int64; accepts ints, ClassLabel members or label names."""
    y = list(y) if not isinstance(y, np.ndarray) else y
    if len(y) and isinstance(y[0], str):
        y = [int(ClassLabel.parse(v)) for v in y]
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ShapeMismatch("labels must be one-dimensional")
    if arr.dtype.kind not in "ui":
        raise DataError(f"labels must be integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= N_CLASSES):
        raise DataError(f"labels must lie in [0, {N_CLASSES - 1}]")
    if n_samples is not None and arr.size != n_samples:
        raise ShapeMismatch(f"{arr.size} labels for {n_samples} samples")
    return arr

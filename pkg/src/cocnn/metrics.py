"""Confusion matrix, accuracy, macro precision and macro recall."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMatrix
from .txcore import CLASS_NAMES, N_CLASSES


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """counts[true, predicted]."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {c.shape}")
        if (c < 0).any():
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def to_csv(self, names=None) -> str:
        names = list(names or CLASS_NAMES[: self.n_classes])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["true\\predicted", *names])
        for name, row in zip(names, self.counts):
            writer.writerow([name, *row.tolist()])
        return buf.getvalue()


def confusion_matrix(pairs, n_classes: int = N_CLASSES) -> ConfusionMatrix:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    pairs = list(pairs)
    if pairs:
        arr = np.asarray([(int(t), int(p)) for t, p in pairs], dtype=np.int64)
        np.add.at(counts, (arr[:, 0], arr[:, 1]), 1)
    return ConfusionMatrix(counts)


def confusion_from_arrays(y_true, y_pred, n_classes: int = N_CLASSES) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    flat = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    return ConfusionMatrix(flat.reshape(n_classes, n_classes))


def _require_samples(cm: ConfusionMatrix):
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix has no samples")


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # 0/0 terms count as 0
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _mean_terms(terms: np.ndarray) -> float:
    # left-to-right summation keeps results reproducible across numpy versions
    total = 0.0
    for t in terms.tolist():
        total += t
    return total / len(terms)


def accuracy(cm: ConfusionMatrix) -> float:
    _require_samples(cm)
    return float(np.trace(cm.counts) / cm.total)


def per_class_precision(cm: ConfusionMatrix) -> np.ndarray:
    return _ratio(np.diag(cm.counts), cm.counts.sum(axis=0))


def per_class_recall(cm: ConfusionMatrix) -> np.ndarray:
    return _ratio(np.diag(cm.counts), cm.counts.sum(axis=1))


def macro_precision(cm: ConfusionMatrix) -> float:
    _require_samples(cm)
    return _mean_terms(per_class_precision(cm))


def macro_recall(cm: ConfusionMatrix) -> float:
    _require_samples(cm)
    return _mean_terms(per_class_recall(cm))


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    per_class: dict
    sample_count: int
    row_percentages: tuple

    def recall_of(self, name: str) -> float:
        return self.per_class[name][1]

    def to_record(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "sample_count": self.sample_count,
            "per_class": {k: {"precision": p, "recall": r} for k, (p, r) in self.per_class.items()},
            "row_percentages": [list(row) for row in self.row_percentages],
        }

    def render_table(self) -> str:
        names = list(self.per_class)
        width = max(7, max(len(n) for n in names) + 1)
        lines = ["true \\ pred".ljust(width + 4) + "".join(n.rjust(8) for n in names)]
        for name, row in zip(names, self.row_percentages):
            lines.append(name.ljust(width + 4) + "".join(f"{v:7.2f}%" for v in row))
        lines.append("")
        lines.append(f"accuracy        {100 * self.accuracy:7.3f}%")
        lines.append(f"macro precision {100 * self.macro_precision:7.3f}%")
        lines.append(f"macro recall    {100 * self.macro_recall:7.3f}%")
        lines.append(f"samples         {self.sample_count}")
        return "\n".join(lines)


def report(cm: ConfusionMatrix, names=None) -> MetricsReport:
    """Metrics plus row-normalised percentages (each true-class row sums to 100)."""
    _require_samples(cm)
    names = list(names or CLASS_NAMES[: cm.n_classes])
    prec, rec = per_class_precision(cm), per_class_recall(cm)
    row_tot = cm.counts.sum(axis=1, keepdims=True)
    pct = 100.0 * _ratio(cm.counts.astype(np.float64), np.broadcast_to(row_tot, cm.counts.shape))
    return MetricsReport(
        accuracy=accuracy(cm),
        macro_precision=macro_precision(cm),
        macro_recall=macro_recall(cm),
        per_class={n: (float(p), float(r)) for n, p, r in zip(names, prec, rec)},
        sample_count=cm.total,
        row_percentages=tuple(tuple(float(v) for v in row) for row in pct),
    )

"""Transaction model, class labels, dataset files, splitting and partitioning."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, MalformedRecord, ZeroNodes

MAX_VALUE = 1 << 256
_MASK64 = (1 << 64) - 1


class ClassLabel(enum.IntEnum):
    Normal = 0
    DoS = 1
    OaU = 2
    FoT = 3
    Re = 4
    DeC = 5
    FDV = 6

    @classmethod
    def parse(cls, name: str) -> "ClassLabel":
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown class label {name!r}") from None


CLASS_NAMES = tuple(label.name for label in ClassLabel)
N_CLASSES = len(ClassLabel)


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step. Returns ``(next_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic generator for ``seed`` and an optional stream path.

    The 64-bit seed (and each stream index) is expanded through splitmix64
    into the key words of a PCG64 generator, so distinct streams of one seed
    are independent.
    """
    state = int(seed) & _MASK64
    words = []
    for part in (0, *stream):
        state ^= int(part) & _MASK64
        for _ in range(2):
            state, out = splitmix64(state)
            words.append(out)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


@dataclass(frozen=True)
class Transaction:
    hash: Optional[bytes]
    bytecode: bytes = b""
    value: int = 0
    timestamp_ms: Optional[int] = None
    label: Optional[ClassLabel] = None

    def __post_init__(self):
        if self.hash is not None and len(self.hash) != 32:
            raise ValueError(f"transaction hash must be 32 bytes, got {len(self.hash)}")
        if not 0 <= self.value < MAX_VALUE:
            raise ValueError("value must be an unsigned 256-bit integer")
        if self.timestamp_ms is not None and self.timestamp_ms < 0:
            raise ValueError("timestamp_ms must be non-negative")
        if self.label is not None and not isinstance(self.label, ClassLabel):
            object.__setattr__(self, "label", ClassLabel(self.label))

    def to_record(self) -> dict:
        rec = {
            "hash": "0x" + self.hash.hex() if self.hash is not None else None,
            "bytecode": "0x" + self.bytecode.hex(),
            "value": str(self.value),
        }
        if rec["hash"] is None:
            del rec["hash"]
        if self.timestamp_ms is not None:
            rec["timestamp_ms"] = self.timestamp_ms
        if self.label is not None:
            rec["label"] = self.label.name
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Transaction":
        if not isinstance(rec, dict):
            raise ValueError("record is not a JSON object")
        h = rec.get("hash")
        ts = rec.get("timestamp_ms")
        if ts is not None and (isinstance(ts, bool) or not isinstance(ts, int)):
            raise ValueError("timestamp_ms must be an integer")
        value = rec.get("value", "0")
        if not isinstance(value, str) or not (value.isascii() and value.isdigit()):
            raise ValueError(f"value must be a decimal string, got {value!r}")
        label = rec.get("label")
        return cls(
            hash=parse_hex(h) if h is not None else None,
            bytecode=parse_hex(rec.get("bytecode", "0x")),
            value=int(value),
            timestamp_ms=ts,
            label=ClassLabel.parse(label) if label is not None else None,
        )


def parse_hex(text: str) -> bytes:
    if not isinstance(text, str) or not text.startswith(("0x", "0X")):
        raise ValueError(f"expected 0x-prefixed hex string, got {text!r}")
    body = text[2:]
    if len(body) % 2:
        raise ValueError("hex string has odd length")
    return bytes.fromhex(body)


@dataclass(frozen=True)
class Dataset:
    transactions: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not isinstance(self.transactions, tuple):
            object.__setattr__(self, "transactions", tuple(self.transactions))

    def __len__(self):
        return len(self.transactions)

    def __iter__(self):
        return iter(self.transactions)

    def __getitem__(self, idx):
        return self.transactions[idx]

    @property
    def labels(self) -> np.ndarray:
        if any(tx.label is None for tx in self.transactions):
            raise DataError("dataset contains unlabeled transactions")
        return np.array([int(tx.label) for tx in self.transactions], dtype=np.int64)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.transactions[i] for i in indices), dict(self.meta))


def load_dataset(path) -> Dataset:
    path = Path(path)
    txs = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                txs.append(Transaction.from_record(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise MalformedRecord(lineno, str(exc)) from exc
    return Dataset(tuple(txs))


def save_dataset(d: Dataset, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for tx in d.transactions:
            fh.write(json.dumps(tx.to_record(), separators=(",", ":")))
            fh.write("\n")


def _shuffled_indices(n: int, seed: int) -> np.ndarray:
    return make_rng(seed).permutation(n)


def split_dataset(d: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError("test_fraction must lie in [0, 1]")
    order = _shuffled_indices(len(d), seed)
    # round half up, not banker's rounding
    n_test = int(np.floor(test_fraction * len(d) + 0.5))
    return d.subset(order[n_test:]), d.subset(order[:n_test])


def partition_sizes(n: int, node_count: int) -> list[int]:
    base, extra = divmod(n, node_count)
    return [base + (1 if k < extra else 0) for k in range(node_count)]


def partition_indices(n: int, node_count: int, seed: int) -> list[np.ndarray]:
    """Shuffle ``range(n)``, then cut into ``node_count`` contiguous slices.

    Sizes differ by at most one; the remainder goes to the lowest-index nodes.
    """
    if node_count < 1:
        raise ZeroNodes("node_count must be at least 1")
    order = _shuffled_indices(n, seed)
    parts, start = [], 0
    for size in partition_sizes(n, node_count):
        parts.append(order[start:start + size])
        start += size
    return parts


def partition_equal(d: Dataset, node_count: int, seed: int) -> list[Dataset]:
    return [d.subset(idx) for idx in partition_indices(len(d), node_count, seed)]


def concat_datasets(parts: Sequence[Dataset]) -> Dataset:
    return Dataset(tuple(tx for p in parts for tx in p.transactions))

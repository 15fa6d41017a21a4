"""Transaction acquisition and windowed real-time detection.

``fetch_transaction`` speaks JSON-RPC 2.0 (``eth_getTransactionByHash``)
over HTTP, or replays recorded request/response fixtures. Detection runs
as a two-stage pipeline: an acquisition thread cuts the stream into
fixed-length windows and hands them over a bounded queue to the detector.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import queue
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from .errors import MalformedResponse, NotFound, RpcError, ShapeMismatch, TransportError
from .imaging import encode_transactions, image_shape
from .nn import ModelParams, predict_indices
from .txcore import CLASS_NAMES, ClassLabel, Dataset, Transaction, load_dataset, parse_hex

log = logging.getLogger(__name__)

DEFAULT_WINDOW_MS = 3000
GET_TX = "eth_getTransactionByHash"


@dataclass(frozen=True)
class RpcEndpoint:
    url: str
    timeout_ms: int = 5000
    retries: int = 2

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")


class HttpTransport:
    """POST a JSON-RPC payload and decode the JSON reply."""

    def __init__(self, url: str):
        self.url = url

    def __call__(self, payload: dict, timeout_s: float) -> dict:
        body = json.dumps(payload).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=timeout_s) as resp:
                raw = resp.read()
        except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
            raise TransportError(f"{self.url}: {exc}") from exc
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"reply is not JSON: {exc}") from exc


class FixtureTransport:
    """Replays recorded ``{"request": ..., "response": ...}`` lines.

    Requests match on method and params; the reply id is rewritten to the
    caller's id.
    """

    def __init__(self, path):
        self.calls = []
        self._table = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            pair = json.loads(line)
            req = pair["request"]
            self._table[self._key(req)] = pair["response"]

    @staticmethod
    def _key(req: dict) -> str:
        params = [p.lower() if isinstance(p, str) else p for p in req.get("params", [])]
        return json.dumps([req["method"], params], sort_keys=True)

    def __call__(self, payload: dict, timeout_s: float) -> dict:
        self.calls.append(payload)
        try:
            resp = dict(self._table[self._key(payload)])
        except KeyError:
            raise TransportError(f"no recorded response for {payload['method']} {payload.get('params')}") from None
        resp["id"] = payload.get("id")
        return resp


_ids = itertools.count(1)


def _hash_hex(tx_hash) -> str:
    raw = parse_hex(tx_hash) if isinstance(tx_hash, str) else bytes(tx_hash)
    if len(raw) != 32:
        raise ValueError("transaction hash must be 32 bytes")
    return "0x" + raw.hex()


def _parse_quantity(text, name: str) -> int:
    if not isinstance(text, str) or not text.startswith("0x"):
        raise MalformedResponse(f"{name} is not a hex quantity: {text!r}")
    try:
        return int(text, 16)
    except ValueError as exc:
        raise MalformedResponse(f"{name} is not a hex quantity: {text!r}") from exc


def fetch_transaction_record(ep: RpcEndpoint, tx_hash, transport: Optional[Callable] = None) -> dict:
    """Fetch one transaction; returns the consumed fields of the RPC result."""
    transport = transport or HttpTransport(ep.url)
    payload = {"jsonrpc": "2.0", "id": next(_ids), "method": GET_TX, "params": [_hash_hex(tx_hash)]}
    last = None
    for attempt in range(ep.retries + 1):
        try:
            reply = transport(payload, ep.timeout_ms / 1000.0)
            break
        except TransportError as exc:
            last = exc
            log.warning("fetch attempt %d/%d failed: %s", attempt + 1, ep.retries + 1, exc)
    else:
        raise TransportError(f"giving up after {ep.retries + 1} attempts: {last}")

    if not isinstance(reply, dict) or reply.get("jsonrpc") != "2.0":
        raise MalformedResponse("reply is not a JSON-RPC 2.0 object")
    if reply.get("error") is not None:
        raise RpcError(f"node error: {reply['error']}")
    if "result" not in reply:
        raise MalformedResponse("reply has neither result nor error")
    result = reply["result"]
    if result is None:
        raise NotFound(f"transaction {payload['params'][0]} not found")
    if not isinstance(result, dict):
        raise MalformedResponse("result is not an object")
    missing = [k for k in ("hash", "input", "value") if k not in result]
    if missing:
        raise MalformedResponse(f"result lacks fields {missing}")
    try:
        bytecode = parse_hex(result["input"])
        hash_bytes = parse_hex(result["hash"])
    except ValueError as exc:
        raise MalformedResponse(str(exc)) from exc
    value = _parse_quantity(result["value"], "value")
    if len(hash_bytes) != 32 or value >> 256:
        raise MalformedResponse("hash or value out of range")
    return {"hash": hash_bytes, "bytecode": bytecode, "value": value,
            "from": result.get("from"), "to": result.get("to")}


def fetch_transaction(ep: RpcEndpoint, tx_hash, transport: Optional[Callable] = None) -> Transaction:
    rec = fetch_transaction_record(ep, tx_hash, transport)
    return Transaction(hash=rec["hash"], bytecode=rec["bytecode"], value=rec["value"])


def fetch_stream(ep: RpcEndpoint, hashes: Iterable, transport=None, clock=time.monotonic) -> Iterator[Transaction]:
    """Fetch hashes in order, stamping each with its arrival time in ms."""
    t0 = clock()
    for h in hashes:
        tx = fetch_transaction(ep, h, transport)
        yield Transaction(tx.hash, tx.bytecode, tx.value, int((clock() - t0) * 1000))


# ---------------------------------------------------------------- windowing


class FixtureStream:
    """Recorded, timestamped transactions in non-decreasing time order."""

    def __init__(self, transactions: Iterable[Transaction]):
        self.transactions = tuple(transactions)
        prev = None
        for i, tx in enumerate(self.transactions):
            if tx.timestamp_ms is None:
                raise ValueError(f"transaction {i} has no timestamp")
            if prev is not None and tx.timestamp_ms < prev:
                raise ValueError(f"timestamps decrease at transaction {i}")
            prev = tx.timestamp_ms

    @classmethod
    def load(cls, path) -> "FixtureStream":
        return cls(load_dataset(path).transactions)

    def __iter__(self):
        return iter(self.transactions)

    def __len__(self):
        return len(self.transactions)


def window_stream(stream: Iterable[Transaction], window_ms: int = DEFAULT_WINDOW_MS) -> Iterator[list]:
    """Half-open windows [k*w, (k+1)*w) anchored at the first timestamp.

    Windows with no arrivals come out as empty lists.
    """
    if window_ms <= 0:
        raise ValueError("window_ms must be positive")
    anchor = None
    current, index = [], 0
    for tx in stream:
        if anchor is None:
            anchor = tx.timestamp_ms
        k = (tx.timestamp_ms - anchor) // window_ms
        if k < index:
            raise ValueError("timestamps must be non-decreasing")
        while index < k:
            yield current
            current, index = [], index + 1
        current.append(tx)
    if anchor is not None:
        yield current


@dataclass(frozen=True)
class WindowRecord:
    window_index: int
    window_start_ms: int
    counts: tuple
    tx_count: int
    elapsed_ms: float
    tx_per_s: Optional[float]
    deadline_missed: bool = False

    def row(self) -> list:
        return [self.window_index, self.window_start_ms, *self.counts, self.tx_count,
                f"{self.elapsed_ms:.3f}", "" if self.tx_per_s is None else f"{self.tx_per_s:.1f}"]


MONITOR_COLUMNS = ["window_index", "window_start_ms", *CLASS_NAMES, "tx_count", "elapsed_ms", "tx_per_s"]


def _check_model(model: ModelParams, with_value: bool):
    if (model.arch.input_rows, model.arch.input_cols) != image_shape(with_value):
        raise ShapeMismatch(
            f"model expects {model.arch.input_rows}x{model.arch.input_cols} images, "
            f"mode {'w/-V' if with_value else 'w/o-V'} produces {image_shape(with_value)}"
        )


def detect_window(batch, model: ModelParams, with_value: bool) -> np.ndarray:
    if not batch:
        return np.zeros(len(ClassLabel), dtype=np.int64)
    pred = predict_indices(model, encode_transactions(batch, with_value))
    return np.bincount(pred, minlength=len(ClassLabel))


def stream_detect(batches: Iterable[list], model: ModelParams, with_value: bool = True,
                  window_ms: Optional[int] = DEFAULT_WINDOW_MS, anchor_ms: int = 0,
                  clock=time.perf_counter) -> Iterator[WindowRecord]:
    """Classify each window; yields one :class:`WindowRecord` per window.

    A window whose processing takes longer than ``window_ms`` is logged as a
    Deadline event and flagged, never raised.
    """
    _check_model(model, with_value)
    for k, batch in enumerate(batches):
        t0 = clock()
        counts = detect_window(batch, model, with_value)
        elapsed = (clock() - t0) * 1000.0
        rate = len(batch) / (elapsed / 1000.0) if batch and elapsed > 0 else None
        missed = window_ms is not None and elapsed > window_ms
        if missed:
            log.warning("Deadline: window %d took %.1f ms (> %d ms)", k, elapsed, window_ms)
        yield WindowRecord(k, anchor_ms + k * (window_ms or 0), tuple(int(c) for c in counts),
                           len(batch), elapsed, rate, missed)


_DONE = object()


def run_pipeline(stream: Iterable[Transaction], model: ModelParams, with_value: bool = True,
                 window_ms: int = DEFAULT_WINDOW_MS, queue_size: int = 4) -> list:
    """Acquisition thread -> bounded queue -> detector; returns the window records.

    A full queue blocks acquisition (back-pressure).
    """
    _check_model(model, with_value)
    q: queue.Queue = queue.Queue(maxsize=queue_size)
    anchor = {}
    failure = []

    def acquire():
        try:
            for batch in window_stream(_remember_anchor(stream, anchor), window_ms):
                q.put(batch)
        except BaseException as exc:  # surfaced in the detector thread
            failure.append(exc)
        finally:
            q.put(_DONE)

    def batches():
        while True:
            item = q.get()
            if item is _DONE:
                return
            yield item

    producer = threading.Thread(target=acquire, name="acquisition", daemon=True)
    producer.start()
    records = []
    for rec in stream_detect(batches(), model, with_value, window_ms):
        records.append(rec)
    producer.join()
    if failure:
        raise failure[0]
    start = anchor.get("t0", 0)
    return [WindowRecord(r.window_index, start + r.window_index * window_ms, r.counts, r.tx_count,
                         r.elapsed_ms, r.tx_per_s, r.deadline_missed) for r in records]


def _remember_anchor(stream, anchor):
    for tx in stream:
        anchor.setdefault("t0", tx.timestamp_ms)
        yield tx


def write_monitor_csv(records: Iterable[WindowRecord], path_or_file) -> None:
    if hasattr(path_or_file, "write"):
        _write_monitor_rows(records, path_or_file)
        return
    with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
        _write_monitor_rows(records, fh)


def _write_monitor_rows(records, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(MONITOR_COLUMNS)
    for rec in records:
        writer.writerow(rec.row())


def throughput(records: Iterable[WindowRecord]) -> Optional[float]:
    """Overall transactions per second of detector time across all windows."""
    records = list(records)
    total = sum(r.tx_count for r in records)
    elapsed = sum(r.elapsed_ms for r in records) / 1000.0
    return total / elapsed if total and elapsed > 0 else None


def replay(dataset: Dataset, model: ModelParams, with_value: bool = True,
           window_ms: int = DEFAULT_WINDOW_MS, queue_size: int = 4) -> list:
    return run_pipeline(FixtureStream(dataset.transactions), model, with_value, window_ms, queue_size)

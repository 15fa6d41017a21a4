"""Centralized and collaborative (gradient-averaging) training.

Collaborative rounds are synchronous: every node computes a gradient on its
own mini-batch, posts it to the exchange, waits at the barrier, then applies
Adam to the arithmetic mean of all posted gradients. Only :class:`ParamGrads`
objects ever cross node boundaries.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import metrics
from .errors import EmptyDataset, EmptyInput, EmptyPartition, ShapeMismatch
from .imaging import encode_transactions
from .nn import (
    AdamState,
    ArchConfig,
    ModelParams,
    ParamGrads,
    adam_step,
    backward,
    init_model,
    predict_indices,
)
from .txcore import Dataset, make_rng

log = logging.getLogger(__name__)

CENTRALIZED = "centralized"
COLLABORATIVE = "collaborative"


@dataclass
class TrainConfig:
    iterations: int = 1000
    batch_size: int = 32
    mode: str = CENTRALIZED
    nodes: int = 1
    with_value: bool = True
    seed: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    conv_filters: tuple = (8, 16)
    aggregate: str = "gradients"  # or "params"
    eval_every: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.nodes < 1:
            raise ValueError("nodes must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.mode not in (CENTRALIZED, COLLABORATIVE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.aggregate not in ("gradients", "params"):
            raise ValueError(f"unknown aggregate mode {self.aggregate!r}")

    @property
    def arch(self) -> ArchConfig:
        return ArchConfig.for_images(self.with_value, self.conv_filters)

    def fresh_adam(self, params: ModelParams) -> AdamState:
        return AdamState.fresh(params, beta1=self.beta1, beta2=self.beta2, eps=self.eps, lr=self.lr)


@dataclass
class RoundLog:
    entries: list = field(default_factory=list)

    def add(self, iteration: int, node: int, loss: float, test_accuracy: Optional[float] = None):
        self.entries.append((iteration, node, loss, test_accuracy))

    def losses(self, node: int = 1) -> list[float]:
        return [e[2] for e in self.entries if e[1] == node]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iteration", "node", "loss", "test_accuracy"])
            for it, node, loss, acc in self.entries:
                writer.writerow([it, node, repr(loss), "" if acc is None else repr(acc)])


class BatchSampler:
    """Epoch-style sampler: reshuffle, walk a cursor, reshuffle when exhausted.

    A batch at least as large as the data always returns every index in order.
    """

    def __init__(self, n: int, batch_size: int, seed: int, stream: int):
        self.n = n
        self.batch_size = batch_size
        self.rng = make_rng(seed, 0xBA7C, stream)
        self.order = np.arange(n)
        self.cursor = n

    def next(self) -> np.ndarray:
        if self.batch_size >= self.n:
            return np.arange(self.n)
        if self.cursor + self.batch_size > self.n:
            self.order = self.rng.permutation(self.n)
            self.cursor = 0
        idx = self.order[self.cursor:self.cursor + self.batch_size]
        self.cursor += self.batch_size
        return idx


@dataclass
class NodeState:
    node_id: int
    params: ModelParams
    adam: AdamState
    images: np.ndarray
    labels: np.ndarray
    sampler: BatchSampler
    local_test: Optional[Dataset] = None

    def local_gradient(self) -> tuple[float, ParamGrads]:
        idx = self.sampler.next()
        return backward(self.params, self.images[idx], self.labels[idx])


class GradientExchange:
    """In-process all-to-all channel that carries gradients only."""

    def __init__(self, node_ids: Sequence[int]):
        self.node_ids = list(node_ids)
        self._inbox: dict = {}

    def post(self, node_id: int, grads: ParamGrads) -> None:
        if not isinstance(grads, ParamGrads):
            raise TypeError(f"exchange carries ParamGrads only, got {type(grads).__name__}")
        self._inbox[node_id] = grads

    def collect(self) -> list:
        missing = [n for n in self.node_ids if n not in self._inbox]
        if missing:
            raise RuntimeError(f"barrier reached without gradients from nodes {missing}")
        out = [self._inbox[n] for n in self.node_ids]
        self._inbox = {}
        return out


def aggregate_grads(grads: Sequence[ParamGrads]) -> ParamGrads:
    """Elementwise mean, summed in the given (ascending node id) order."""
    grads = list(grads)
    if not grads:
        raise EmptyInput("no gradients to aggregate")
    first = grads[0]
    for g in grads[1:]:
        if g.arch != first.arch:
            raise ShapeMismatch("gradient shapes differ across nodes")
    if len(grads) == 1:
        return ParamGrads(first.arch, {n: t.copy() for n, t in first.items()})
    out = {}
    for name in first:
        acc = grads[0][name].copy()
        for g in grads[1:]:
            acc += g[name]
        out[name] = acc / len(grads)
    return ParamGrads(first.arch, out)


def average_params(models: Sequence[ModelParams]) -> ModelParams:
    avg = aggregate_grads([ParamGrads(m.arch, m.tensors) for m in models])
    return ModelParams(avg.arch, avg.tensors)


def _labeled_arrays(d: Dataset, with_value: bool):
    if len(d) == 0:
        raise EmptyDataset("dataset is empty")
    return encode_transactions(d, with_value=with_value), d.labels


def _accuracy(model: ModelParams, images, labels) -> float:
    return float(np.mean(predict_indices(model, images) == labels))


def _make_node(node_id, stream, images, labels, cfg, params, local_test=None):
    return NodeState(
        node_id=node_id,
        params=params,
        adam=cfg.fresh_adam(params),
        images=images,
        labels=labels,
        sampler=BatchSampler(len(labels), cfg.batch_size, cfg.seed, stream),
        local_test=local_test,
    )


def train_centralized(train: Dataset, cfg: TrainConfig, test: Optional[Dataset] = None,
                      callback: Optional[Callable] = None):
    """Plain mini-batch Adam training on one dataset. Returns (params, RoundLog)."""
    images, labels = _labeled_arrays(train, cfg.with_value)
    return train_centralized_arrays(images, labels, cfg, test=test, callback=callback)


def train_centralized_arrays(images, labels, cfg: TrainConfig, test=None, callback=None):
    node = _make_node(1, 0, images, labels, cfg, init_model(cfg.arch, cfg.seed))
    test_arrays = _labeled_arrays(test, cfg.with_value) if test is not None and len(test) else None
    roundlog = RoundLog()
    for it in range(1, cfg.iterations + 1):
        loss, grads = node.local_gradient()
        node.params, node.adam = adam_step(node.params, node.adam, grads)
        acc = None
        if test_arrays and cfg.eval_every and it % cfg.eval_every == 0:
            acc = _accuracy(node.params, *test_arrays)
        roundlog.add(it, 1, loss, acc)
        if callback is not None:
            callback(it, [node.params])
    return node.params, roundlog


def train_collaborative(partitions: Sequence[Dataset], cfg: TrainConfig,
                        tests: Optional[Sequence[Dataset]] = None,
                        callback: Optional[Callable] = None):
    """Synchronous collaborative training over ``len(partitions)`` nodes.

    Returns the per-node parameter list (node 1 first) and the RoundLog.
    """
    if not partitions:
        raise EmptyInput("no partitions")
    arrays = []
    for k, part in enumerate(partitions):
        if len(part) == 0:
            raise EmptyPartition(f"partition {k + 1} is empty")
        arrays.append(_labeled_arrays(part, cfg.with_value))
    return train_collaborative_arrays(arrays, cfg, tests=tests, callback=callback)


def train_collaborative_arrays(arrays, cfg: TrainConfig, tests=None, callback=None):
    start = init_model(cfg.arch, cfg.seed)
    nodes = [
        _make_node(k + 1, k, images, labels, cfg, start,
                   tests[k] if tests is not None else None)
        for k, (images, labels) in enumerate(arrays)
    ]
    test_arrays = [
        _labeled_arrays(n.local_test, cfg.with_value) if n.local_test is not None and len(n.local_test) else None
        for n in nodes
    ]
    exchange = GradientExchange([n.node_id for n in nodes])
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 and len(nodes) > 1 else None
    roundlog = RoundLog()
    try:
        for it in range(1, cfg.iterations + 1):
            if pool is not None:
                results = list(pool.map(NodeState.local_gradient, nodes))
            else:
                results = [n.local_gradient() for n in nodes]
            for node, (_, grads) in zip(nodes, results):
                exchange.post(node.node_id, grads)
            received = exchange.collect()

            if cfg.aggregate == "gradients":
                mean = aggregate_grads(received)
                for node in nodes:
                    node.params, node.adam = adam_step(node.params, node.adam, mean)
            else:
                for node, grads in zip(nodes, received):
                    node.params, node.adam = adam_step(node.params, node.adam, grads)
                merged = average_params([n.params for n in nodes])
                for node in nodes:
                    node.params = merged

            for node, (loss, _), ta in zip(nodes, results, test_arrays):
                acc = None
                if ta and cfg.eval_every and it % cfg.eval_every == 0:
                    acc = _accuracy(node.params, *ta)
                roundlog.add(it, node.node_id, loss, acc)
            if callback is not None:
                callback(it, [n.params for n in nodes])
            if it % 100 == 0:
                log.info("iteration %d mean loss %.4f", it, np.mean([r[0] for r in results]))
    finally:
        if pool is not None:
            pool.shutdown()
    return [n.params for n in nodes], roundlog


def evaluate_node(node: NodeState, with_value: bool) -> metrics.MetricsReport:
    if node.local_test is None or len(node.local_test) == 0:
        raise EmptyDataset(f"node {node.node_id} has no local test data")
    return evaluate_model(node.params, node.local_test, with_value)


def evaluate_model(model: ModelParams, data: Dataset, with_value: bool) -> metrics.MetricsReport:
    images, labels = _labeled_arrays(data, with_value)
    pred = predict_indices(model, images)
    return metrics.report(metrics.confusion_from_arrays(labels, pred))

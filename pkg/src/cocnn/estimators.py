"""scikit-learn style wrappers around the numpy CNN and training loops.

    >>> from sklearn.pipeline import make_pipeline
    >>> clf = make_pipeline(TransactionImageEncoder(), CollaborativeCNNClassifier(n_nodes=3))
    >>> clf.fit(transactions, labels).predict(new_transactions)   # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_images, check_labels
from .collab import COLLABORATIVE, TrainConfig, train_centralized_arrays, train_collaborative_arrays
from .imaging import TransactionImageEncoder
from .nn import predict_proba
from .txcore import CLASS_NAMES, N_CLASSES, partition_indices

__all__ = ["CNNClassifier", "CollaborativeCNNClassifier", "TransactionImageEncoder"]


class CNNClassifier(ClassifierMixin, BaseEstimator):
    """Centralized CNN over grey transaction images.

    ``X`` is a ``(n, rows, cols)`` stack of 0..255 intensities; 33 rows
    means the value row is present, 32 means bytecode only.
    """

    def __init__(self, conv_filters=(8, 16), iterations=1000, batch_size=32,
                 learning_rate=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8, random_state=0):
        self.conv_filters = conv_filters
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.random_state = random_state

    def _config(self, X, **extra) -> TrainConfig:
        if X.shape[1:] not in ((33, 32), (32, 32)):
            raise ValueError(f"images must be 33x32 or 32x32, got {X.shape[1:]}")
        return TrainConfig(
            iterations=self.iterations, batch_size=self.batch_size,
            with_value=X.shape[1] == 33, seed=int(self.random_state or 0),
            lr=self.learning_rate, beta1=self.beta1, beta2=self.beta2, eps=self.epsilon,
            conv_filters=tuple(self.conv_filters), **extra,
        )

    def fit(self, X, y):
        X = check_images(X)
        y = check_labels(y, X.shape[0])
        cfg = self._config(X)
        self.params_, self.round_log_ = train_centralized_arrays(X, y, cfg)
        self._set_fitted(X, cfg)
        return self

    def _set_fitted(self, X, cfg):
        self.classes_ = np.arange(N_CLASSES)
        self.class_names_ = CLASS_NAMES
        self.image_shape_ = X.shape[1:]
        self.with_value_ = cfg.with_value
        self.n_params_ = self.params_.n_params

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return predict_proba(self.params_, check_images(X, self.image_shape_))

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def predict_labels(self, X):
        return [CLASS_NAMES[i] for i in self.predict(X)]


class CollaborativeCNNClassifier(CNNClassifier):
    """CNN trained by ``n_nodes`` simulated nodes exchanging gradients each round.

    ``fit(X, y)`` partitions the samples equally across nodes (seeded by
    ``partition_seed``); ``fit_partitions`` takes explicit per-node data.
    After fitting, ``node_params_`` holds every node's model; with
    ``aggregate="gradients"`` they are identical and ``params_`` is node 1's.
    """

    def __init__(self, n_nodes=3, aggregate="gradients", partition_seed=0, workers=1,
                 conv_filters=(8, 16), iterations=1000, batch_size=32,
                 learning_rate=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8, random_state=0):
        super().__init__(conv_filters=conv_filters, iterations=iterations, batch_size=batch_size,
                         learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon,
                         random_state=random_state)
        self.n_nodes = n_nodes
        self.aggregate = aggregate
        self.partition_seed = partition_seed
        self.workers = workers

    def fit(self, X, y):
        X = check_images(X)
        y = check_labels(y, X.shape[0])
        parts = partition_indices(X.shape[0], self.n_nodes, int(self.partition_seed or 0))
        return self.fit_partitions([(X[idx], y[idx]) for idx in parts])

    def fit_partitions(self, partitions):
        arrays = []
        for X, y in partitions:
            X = check_images(X)
            arrays.append((X, check_labels(y, X.shape[0])))
        shapes = {X.shape[1:] for X, _ in arrays}
        if len(shapes) != 1:
            raise ValueError("all partitions must use the same image shape")
        cfg = self._config(arrays[0][0], mode=COLLABORATIVE, nodes=len(arrays),
                           aggregate=self.aggregate, workers=self.workers)
        self.node_params_, self.round_log_ = train_collaborative_arrays(arrays, cfg)
        self.params_ = self.node_params_[0]
        self._set_fitted(arrays[0][0], cfg)
        return self

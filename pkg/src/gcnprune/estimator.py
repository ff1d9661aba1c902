"""scikit-learn compatible wrappers.

``SparseGCNClassifier`` is transductive: ``X`` holds the features of *all*
nodes of one graph, the graph is passed to ``fit`` and kept, and unlabelled
nodes carry ``y == -1`` (the convention of ``sklearn.semi_supervised``).
``predict``/``predict_proba`` return one row per node of that graph.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigError
from .graphs import GraphDataset, NormalizedAdjacency, Split, build_normalized_adjacency, symmetrize_edges
from .model import forward, init_weights
from .pruning import PruneSpec, prune_adjacency
from .workflow import (
    RoundSpecs,
    TrainingContext,
    sparsify_round,
    topk_total,
    train_to_convergence,
)

UNLABELED = -1


def check_node_features(X) -> np.ndarray:
    return check_array(X, dtype=np.float64, ensure_all_finite=True)


def check_graph(adjacency, n_nodes: int, undirected: bool = True) -> np.ndarray:
    """Normalize an ``(E, 2)`` edge array or a scipy sparse adjacency to a sorted edge list."""
    if isinstance(adjacency, NormalizedAdjacency):
        raise ConfigError("pass raw edges or a 0/1 adjacency; normalization happens inside fit")
    if sp.issparse(adjacency):
        coo = sp.coo_matrix(adjacency)
        if coo.shape != (n_nodes, n_nodes):
            raise ConfigError(f"adjacency shape {coo.shape} does not match {n_nodes} nodes")
        edges = np.stack([coo.row, coo.col], axis=1)[coo.data != 0]
    else:
        edges = np.asarray(adjacency, dtype=np.int64)
        if edges.size and (edges.ndim != 2 or edges.shape[1] != 2):
            raise ConfigError(f"edges must have shape (E, 2), got {edges.shape}")
        edges = edges.reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n_nodes):
        raise ConfigError(f"edge endpoint outside [0, {n_nodes})")
    return symmetrize_edges(edges, n_nodes, undirected=undirected)


class SparseGCNClassifier(ClassifierMixin, BaseEstimator):
    """Two-layer GCN node classifier with prunable graph, weights and embedding."""

    def __init__(self, hidden_dim=64, max_epoch=200, lr=0.01, weight_decay=0.0,
                 normalize_features=True, undirected=True, random_state=0):
        self.hidden_dim = hidden_dim
        self.max_epoch = max_epoch
        self.lr = lr
        self.weight_decay = weight_decay
        self.normalize_features = normalize_features
        self.undirected = undirected
        self.random_state = random_state

    def fit(self, X, y, *, adjacency, train_idx=None, val_idx=None):
        X = check_node_features(X)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ConfigError(f"y must have {X.shape[0]} entries, got shape {y.shape}")
        labelled = y != UNLABELED
        self.label_encoder_ = LabelEncoder().fit(y[labelled])
        self.classes_ = self.label_encoder_.classes_
        codes = np.zeros(len(y), dtype=np.int64)
        codes[labelled] = self.label_encoder_.transform(y[labelled])

        train = np.flatnonzero(labelled) if train_idx is None else np.asarray(train_idx, dtype=np.int64)
        val = train if val_idx is None else np.asarray(val_idx, dtype=np.int64)
        if not len(train):
            raise ConfigError("no labelled training nodes")
        edges = check_graph(adjacency, X.shape[0], self.undirected)
        dataset = GraphDataset(X.shape[0], edges, X, codes, len(self.classes_)).validate()
        # validation defaults to the training nodes, so the sets need not be disjoint here
        dataset.split = Split(train, val, np.empty(0, np.int64))
        self.context_ = TrainingContext.from_dataset(dataset, self.normalize_features)
        self.adjacency_ = self.context_.adj
        self.n_features_in_ = X.shape[1]
        model = init_weights(X.shape[1], self.hidden_dim, len(self.classes_), self.random_state, X.shape[0])
        self.history_, self.model_ = train_to_convergence(
            model, self.adjacency_, self.context_, self.max_epoch, self.lr, self.weight_decay
        )
        return self

    def sparsify(self, a=0.0, w=0.0, h=0.0, *, retrain=True):
        """Prune once and (by default) retrain from the current weights.

        ``a`` and ``w`` are percentages of the surviving graph edges and
        weights, removed by global magnitude; ``h`` is the percentage of the
        hidden width removed per node by top-k.
        """
        check_is_fitted(self, "model_")
        seed = self.random_state
        specs = RoundSpecs(
            adjacency=PruneSpec("global_magnitude", "adjacency", amount=a, seed=seed) if a else None,
            weight=PruneSpec("global_magnitude", "weight", amount=w, seed=seed) if w else None,
            embedding=PruneSpec("topk", "embedding", k=topk_total(h, self.hidden_dim))
            if topk_total(h, self.hidden_dim) else None,
        )
        model, self.adjacency_, self.prune_outcomes_ = sparsify_round(
            self.model_, self.adjacency_, self.context_.x, specs
        )
        if retrain:
            model.reset_optimizer()
            self.history_, model = train_to_convergence(
                model, self.adjacency_, self.context_, self.max_epoch, self.lr, self.weight_decay,
                round_index=self.history_.round_index + 1,
            )
        self.model_ = model
        return self

    def _features(self, X):
        check_is_fitted(self, "model_")
        if X is None:
            return self.context_.x
        X = check_node_features(X)
        if X.shape != self.context_.dataset.features.shape:
            raise ConfigError(f"X must describe the fitted graph's {self.context_.dataset.n_nodes} nodes")
        if self.normalize_features:
            sums = X.sum(axis=1, keepdims=True)
            X = np.divide(X, sums, out=np.zeros_like(X), where=sums != 0)
        return X

    def predict_log_proba(self, X=None):
        x = self._features(X)
        return forward(self.model_, self.adjacency_, x).log_probs

    def predict_proba(self, X=None):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X=None):
        winners = np.argmax(self.predict_log_proba(X), axis=1)
        return self.classes_[winners]

    def score(self, X, y, sample_weight=None):
        """Accuracy over the nodes whose label is not -1."""
        y = np.asarray(y)
        keep = y != UNLABELED
        pred = self.predict(X)
        w = None if sample_weight is None else np.asarray(sample_weight)[keep]
        return float(np.average(pred[keep] == y[keep], weights=w))


class AdjacencyPruner(TransformerMixin, BaseEstimator):
    """Stateless transformer removing off-diagonal entries of a :class:`NormalizedAdjacency`."""

    def __init__(self, technique="global_magnitude", amount=None, k=None, seed=0, symmetric_pairing=True):
        self.technique = technique
        self.amount = amount
        self.k = k
        self.seed = seed
        self.symmetric_pairing = symmetric_pairing

    def fit(self, adj=None, y=None):
        self.spec_ = PruneSpec(self.technique, "adjacency", amount=self.amount, k=self.k, seed=self.seed)
        return self

    def transform(self, adj):
        check_is_fitted(self, "spec_")
        if not isinstance(adj, NormalizedAdjacency):
            raise ConfigError("AdjacencyPruner transforms a NormalizedAdjacency")
        pruned, self.outcome_ = prune_adjacency(adj, self.spec_, self.symmetric_pairing)
        return pruned


class AdjacencyNormalizer(TransformerMixin, BaseEstimator):
    """Edge list (E, 2) -> :class:`NormalizedAdjacency` for a graph of ``n_nodes`` nodes."""

    def __init__(self, n_nodes=None, undirected=True):
        self.n_nodes = n_nodes
        self.undirected = undirected

    def fit(self, edges, y=None):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.n_nodes_ = self.n_nodes if self.n_nodes is not None else int(edges.max()) + 1 if edges.size else 0
        return self

    def transform(self, edges):
        check_is_fitted(self, "n_nodes_")
        edges = check_graph(np.asarray(edges).reshape(-1, 2), self.n_nodes_, self.undirected)
        n = self.n_nodes_
        ds = GraphDataset(n, edges, np.zeros((n, 1)), np.zeros(n, dtype=np.int64), 1)
        return build_normalized_adjacency(ds)

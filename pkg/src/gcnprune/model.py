"""Two-layer GCN with masked weights and a masked hidden embedding.

Forward pass::

    pre1   = A_hat @ X @ (W1 * M_w1)
    h1     = relu(pre1) * M_h1
    logits = A_hat @ h1 @ (W2 * M_w2)

Each product is evaluated in whichever association order is cheaper
(analytic FLOPs); the value does not depend on the choice. Gradients are
derived by hand and gated by every mask, so masked entries neither move
nor leak gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigError, ShapeError
from .graphs import NormalizedAdjacency
from .tensor import (
    CsrMatrix,
    OpCounter,
    apply_mask,
    csr_transpose,
    dense_matmul,
    log_softmax_rows,
    relu,
    relu_backward,
    spmm,
)


@dataclass
class AdamState:
    m_w1: np.ndarray
    v_w1: np.ndarray
    m_w2: np.ndarray
    v_w2: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, w1: np.ndarray, w2: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(w1), np.zeros_like(w1), np.zeros_like(w2), np.zeros_like(w2))


@dataclass
class GcnModel:
    w1: np.ndarray
    w2: np.ndarray
    mask_w1: np.ndarray
    mask_w2: np.ndarray
    mask_h1: np.ndarray
    adam: AdamState = field(default=None)

    def __post_init__(self) -> None:
        if self.adam is None:
            self.adam = AdamState.zeros_like(self.w1, self.w2)

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.mask_h1.shape[0]

    def copy(self) -> "GcnModel":
        a = self.adam
        return GcnModel(
            self.w1.copy(), self.w2.copy(),
            self.mask_w1.copy(), self.mask_w2.copy(), self.mask_h1.copy(),
            AdamState(a.m_w1.copy(), a.v_w1.copy(), a.m_w2.copy(), a.v_w2.copy(), a.step),
        )

    def reset_optimizer(self) -> None:
        self.adam = AdamState.zeros_like(self.w1, self.w2)

    def enforce_masks(self) -> None:
        self.w1[~self.mask_w1] = 0.0
        self.w2[~self.mask_w2] = 0.0


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_weights(d: int, hidden: int, n_classes: int, seed: int, n_nodes: int) -> GcnModel:
    """Glorot-uniform weights, all-true masks, zeroed Adam state."""
    if min(d, hidden, n_classes, n_nodes) < 1:
        raise ConfigError("model dimensions must be positive")
    rng = np.random.default_rng(seed)
    w1 = glorot_uniform(rng, d, hidden)
    w2 = glorot_uniform(rng, hidden, n_classes)
    return GcnModel(
        w1, w2,
        np.ones_like(w1, dtype=bool),
        np.ones_like(w2, dtype=bool),
        np.ones((n_nodes, hidden), dtype=bool),
    )


@dataclass
class ForwardCache:
    pre1: np.ndarray
    h1: np.ndarray
    logits: np.ndarray
    log_probs: np.ndarray
    orders: tuple[str, str]


class Gradients(NamedTuple):
    w1: np.ndarray
    w2: np.ndarray


def order_flops(n: int, d: int, f: int, row_nnz: np.ndarray) -> dict[str, int]:
    """Analytic FLOPs of A(HW) ("right") and (AH)W ("left") for H n x d, W d x f."""
    nnz = int(row_nnz.sum())
    spmm_adds = int(np.maximum(row_nnz - 1, 0).sum())
    dense = lambda inner, width: n * width * (2 * inner - 1)  # noqa: E731
    return {
        "right": dense(d, f) + f * (nnz + spmm_adds),
        "left": d * (nnz + spmm_adds) + dense(d, f),
    }


def propagate(a: CsrMatrix, h: np.ndarray, w: np.ndarray, counter: OpCounter | None = None,
              order: str | None = None) -> tuple[np.ndarray, str]:
    """Compute ``a @ h @ w`` in the cheaper association order (or the forced one)."""
    if order is None:
        costs = order_flops(h.shape[0], h.shape[1], w.shape[1], a.row_nnz())
        order = "right" if costs["right"] <= costs["left"] else "left"
    if order == "right":
        return spmm(a, dense_matmul(h, w, counter), counter), order
    return dense_matmul(spmm(a, h, counter), w, counter), order


def forward(model: GcnModel, adj: NormalizedAdjacency, x: np.ndarray,
            counter: OpCounter | None = None, orders: tuple | None = None) -> ForwardCache:
    a = adj.matrix
    if x.shape != (a.n_rows, model.n_features):
        raise ShapeError(f"features {x.shape} do not match graph/model ({a.n_rows}, {model.n_features})")
    if model.n_nodes != a.n_rows:
        raise ShapeError("embedding mask rows do not match the number of nodes")
    o1, o2 = orders or (None, None)
    pre1, o1 = propagate(a, x, apply_mask(model.w1, model.mask_w1), counter, o1)
    h1 = apply_mask(relu(pre1), model.mask_h1)
    logits, o2 = propagate(a, h1, apply_mask(model.w2, model.mask_w2), counter, o2)
    return ForwardCache(pre1, h1, logits, log_softmax_rows(logits), (o1, o2))


def _node_index(node_set) -> np.ndarray:
    idx = np.asarray(node_set, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ConfigError("node set is empty")
    return idx


def nll_loss(log_probs: np.ndarray, labels: np.ndarray, node_set) -> float:
    idx = _node_index(node_set)
    return float(-log_probs[idx, labels[idx]].mean())


def backward(model: GcnModel, adj: NormalizedAdjacency, x: np.ndarray, cache: ForwardCache,
             labels: np.ndarray, node_set, adj_t: CsrMatrix | None = None) -> Gradients:
    idx = _node_index(node_set)
    n = adj.n
    if cache.log_probs.shape != (n, model.n_classes) or cache.pre1.shape != (n, model.hidden_dim):
        raise ShapeError("forward cache does not match the model/graph (stale cache)")
    if adj_t is None:
        adj_t = csr_transpose(adj.matrix)

    # d loss / d logits: (softmax - onehot) / |S| on the labelled rows only
    g_logits = np.zeros_like(cache.log_probs)
    g_logits[idx] = np.exp(cache.log_probs[idx])
    g_logits[idx, labels[idx]] -= 1.0
    g_logits /= len(idx)

    g_t2 = spmm(adj_t, g_logits)
    g_w2 = apply_mask(cache.h1.T @ g_t2, model.mask_w2)

    g_h1 = g_t2 @ apply_mask(model.w2, model.mask_w2).T
    g_pre1 = relu_backward(apply_mask(g_h1, model.mask_h1), cache.pre1)
    g_t1 = spmm(adj_t, g_pre1)
    g_w1 = apply_mask(x.T @ g_t1, model.mask_w1)
    return Gradients(g_w1, g_w2)


def adam_step(model: GcnModel, grads: Gradients, lr: float = 0.01, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """Bias-corrected Adam update in place, then re-zero masked weights."""
    st = model.adam
    st.step += 1
    bc1 = 1.0 - beta1 ** st.step
    bc2 = 1.0 - beta2 ** st.step
    for w, g, mask, m, v in (
        (model.w1, grads.w1, model.mask_w1, st.m_w1, st.v_w1),
        (model.w2, grads.w2, model.mask_w2, st.m_w2, st.v_w2),
    ):
        if g.shape != w.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {w.shape}")
        if weight_decay:
            g = g + weight_decay * apply_mask(w, mask)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        w -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    model.enforce_masks()


def predict(log_probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(log_probs, axis=1)


def accuracy(log_probs: np.ndarray, labels: np.ndarray, node_set) -> float:
    idx = _node_index(node_set)
    return float(np.mean(predict(log_probs[idx]) == labels[idx]))


def evaluate(model: GcnModel, adj: NormalizedAdjacency, x: np.ndarray, labels: np.ndarray,
             node_set) -> float:
    _node_index(node_set)
    return accuracy(forward(model, adj, x).log_probs, labels, node_set)

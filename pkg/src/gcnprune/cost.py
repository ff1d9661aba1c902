"""Analytic MAC/FLOP/memory accounting for one GCN layer and the whole model.

A layer multiplies the adjacency (n x n, m nonzeros) by an embedding H
(n x d) and a weight W (d x f). With ``d > f`` the cheaper association is
``A @ (H @ W)`` whose cost is ``f*m + d*f*n - f*n`` MACs, MACs being half the
multiply+add FLOP count. Uniform sparsity fractions ``w`` on W and ``h`` on H
shrink that by at most ``(1-w)(1-h)`` when the graph is pruned at ``a ~= h``.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ConfigError, DegenerateInputError
from .model import forward
from .tensor import CsrMatrix, OpCounter, dense_matmul, spmm


class PremiseWarning(UserWarning):
    """The a ~= h premise of the sparse MAC bound does not hold."""


@dataclass(frozen=True)
class LayerDims:
    n: int
    d: int
    f: int
    m: int

    def __post_init__(self) -> None:
        if min(self.n, self.d, self.f, self.m) < 1:
            raise ConfigError(f"layer dimensions must be positive: {self}")


@dataclass(frozen=True)
class SparsityTriple:
    a: float = 0.0
    h: float = 0.0
    w: float = 0.0

    def __post_init__(self) -> None:
        for name in ("a", "h", "w"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ConfigError(f"sparsity {name}={v} must lie in [0, 1)")


def right_order_macs(dims: LayerDims) -> int:
    n, d, f, m = dims.n, dims.d, dims.f, dims.m
    return f * m + d * f * n - f * n


def left_order_macs(dims: LayerDims) -> int:
    n, d, f, m = dims.n, dims.d, dims.f, dims.m
    return (2 * d * m - d * n + 2 * d * f * n - f * n) // 2


def multiplication_order(dims: LayerDims) -> str:
    return "right" if dims.d > dims.f else "left"


def dense_layer_macs(dims: LayerDims) -> int:
    """MACs of one dense layer; outside the ``d > f`` regime the cheaper left order is charged."""
    if dims.d > dims.f:
        return right_order_macs(dims)
    return min(right_order_macs(dims), left_order_macs(dims))


def sparse_layer_macs_bound(dims: LayerDims, s: SparsityTriple, tolerance: float = 0.05):
    """``(1-w)(1-h)`` times the dense MACs (``h`` stands in for the graph sparsity too).

    Exact when the inputs are :class:`fractions.Fraction`. Warns with
    :class:`PremiseWarning` when ``|a - h|`` exceeds ``tolerance``.
    """
    if abs(s.a - s.h) > tolerance:
        warnings.warn(
            f"graph sparsity a={float(s.a):.4f} and embedding sparsity h={float(s.h):.4f} differ by "
            f"more than {tolerance}; the bound's premise does not hold",
            PremiseWarning,
            stacklevel=2,
        )
    return (1 - s.w) * (1 - s.h) * dense_layer_macs(dims)


def reduction_factor_bound(w, h_prime):
    if not (0 <= w < 1 and 0 <= h_prime < 1):
        raise ConfigError(f"sparsities must lie in [0, 1), got w={w}, h'={h_prime}")
    return 1 / ((1 - w) * (1 - h_prime))


def param_count(d: int, hidden: int, n_classes: int) -> int:
    return d * hidden + hidden * n_classes


def compression_ratio(params_total: int, params_nonzero: int) -> float:
    if params_nonzero <= 0:
        raise DegenerateInputError("no surviving parameters; compression ratio undefined")
    return params_total / params_nonzero


def param_accounting(model) -> tuple[int, int, float]:
    """(total, surviving, total/surviving) over both weight matrices of a model."""
    total = model.w1.size + model.w2.size
    nonzero = int(model.mask_w1.sum() + model.mask_w2.sum())
    return total, nonzero, compression_ratio(total, nonzero)


def complexity_report(n_layers: int, dims: LayerDims, s: SparsityTriple) -> dict:
    """Asymptotic time/memory terms evaluated with all constants set to 1."""
    n, f, m = dims.n, dims.f, dims.m
    keep_w, keep_h = 1 - s.w, 1 - s.h
    return {
        "label": "asymptotic, constant-free",
        "time": float(keep_w * keep_h * (m + f * n) * f * n_layers),
        "memory": float(n_layers * f * (keep_h * n + keep_w * f) + keep_h * m),
    }


# -- instrumented measurement ---------------------------------------------------

def measure_layer_macs(a: CsrMatrix, h: np.ndarray, w: np.ndarray, order: str = "right") -> int:
    counter = OpCounter()
    if order == "right":
        spmm(a, dense_matmul(h, w, counter), counter)
    else:
        dense_matmul(spmm(a, h, counter), w, counter)
    return counter.macs()


def compact_layer_macs(a: CsrMatrix, h: np.ndarray, w: np.ndarray) -> int:
    """Right-order MACs after deleting all-zero columns of ``h`` and ``w``.

    This is how column-structured sparsity turns into smaller operands; with
    unstructured masks few columns vanish and the count stays near dense.
    """
    keep_in = np.flatnonzero(np.any(h != 0.0, axis=0) & np.any(w != 0.0, axis=1))
    keep_out = np.flatnonzero(np.any(w[keep_in] != 0.0, axis=0))
    if not len(keep_in) or not len(keep_out):
        return 0
    return measure_layer_macs(a, h[:, keep_in], w[np.ix_(keep_in, keep_out)])


def random_full_row_csr(rng: np.random.Generator, n: int, m: int) -> CsrMatrix:
    """n x n CSR with exactly ``m`` nonzeros, the diagonal among them (no empty rows)."""
    if not n <= m <= n * n:
        raise ConfigError(f"need n <= m <= n^2, got n={n}, m={m}")
    diag = np.arange(n) * n + np.arange(n)
    off = np.setdiff1d(np.arange(n * n), diag)
    keys = np.concatenate([diag, rng.choice(off, size=m - n, replace=False)])
    values = rng.uniform(0.1, 1.0, size=m)
    return CsrMatrix.from_coo(keys // n, keys % n, values, (n, n))


@dataclass
class CostReport:
    dense_macs: int
    sparse_macs_bound: float
    measured_macs: int
    effective_macs: int
    reduction_bound: float
    params_total: int
    params_nonzero: int
    compression_ratio: float | None
    sparsity: dict
    premise_holds: bool
    bound_with_a: float
    layers: list = field(default_factory=list)
    memory_bound_terms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def model_cost_report(model, adj, x: np.ndarray, original_nnz: int, tolerance: float = 0.05) -> CostReport:
    """Analytic and counted costs of one forward pass of ``model`` on the current graph."""
    n = adj.n
    w1m = np.where(model.mask_w1, model.w1, 0.0)
    w2m = np.where(model.mask_w2, model.w2, 0.0)
    counter = OpCounter()
    cache = forward(model, adj, x, counter)

    w_total = model.w1.size + model.w2.size
    w_nonzero = int(model.mask_w1.sum() + model.mask_w2.sum())
    s_w = 1 - w_nonzero / w_total
    s_h = 1 - float(model.mask_h1.mean())
    s_a = 1 - adj.nnz / original_nnz

    layers = []
    dense_total = 0
    bound_total = 0.0
    bound_a_total = 0.0
    for dims, w_frac, h_frac, h, w in (
        (LayerDims(n, model.n_features, model.hidden_dim, original_nnz),
         1 - model.mask_w1.mean(), 0.0, x, w1m),
        (LayerDims(n, model.hidden_dim, model.n_classes, original_nnz),
         1 - model.mask_w2.mean(), s_h, cache.h1, w2m),
    ):
        dense = dense_layer_macs(dims)
        bound = (1 - w_frac) * (1 - h_frac) * dense
        bound_a = (1 - w_frac) * (1 - s_a) * dense
        dense_total += dense
        bound_total += bound
        bound_a_total += bound_a
        layers.append({
            "dims": asdict(dims),
            "order": multiplication_order(dims),
            "dense_macs": dense,
            "sparse_macs_bound": float(bound),
            "effective_macs": compact_layer_macs(adj.matrix, h, w),
        })

    total, nonzero = w_total, w_nonzero
    return CostReport(
        dense_macs=dense_total,
        sparse_macs_bound=float(bound_total),
        measured_macs=counter.macs(),
        effective_macs=sum(l["effective_macs"] for l in layers),
        reduction_bound=float(reduction_factor_bound(min(s_w, 1 - 1e-12), min(s_h, 1 - 1e-12))),
        params_total=total,
        params_nonzero=nonzero,
        compression_ratio=compression_ratio(total, nonzero) if nonzero else None,
        sparsity={"a": s_a, "w": s_w, "h": s_h},
        premise_holds=abs(s_a - s_h) <= tolerance,
        bound_with_a=float(bound_a_total),
        layers=layers,
        memory_bound_terms=complexity_report(
            2, LayerDims(n, model.hidden_dim, model.hidden_dim, adj.nnz),
            SparsityTriple(min(s_a, 0.999999), min(s_h, 0.999999), min(s_w, 0.999999)),
        ),
    )

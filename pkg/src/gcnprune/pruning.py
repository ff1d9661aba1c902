"""Random, global-magnitude, per-row top-k and sensitivity (lambda * sigma) pruning.

The selection functions work on a flat candidate pool listed in row-major
order and return indices into that pool; ties therefore break toward the
lexicographically first (row, col) position. :func:`prune_mask` and
:func:`prune_adjacency` map pools onto masks and CSR storage.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigError, DegenerateInputError
from .graphs import NormalizedAdjacency

RANDOM = "random"
GLOBAL_MAGNITUDE = "global_magnitude"
TOPK = "topk"
SENSITIVITY = "sensitivity"
TECHNIQUES = (RANDOM, GLOBAL_MAGNITUDE, TOPK, SENSITIVITY)
TARGETS = ("adjacency", "weight", "embedding")


@dataclass(frozen=True)
class PruneSpec:
    technique: str
    target: str = "weight"
    amount: float | None = None  # percent of the current pool (random, global_magnitude)
    k: int | None = None  # entries per row (topk)
    lam: float | None = None  # threshold multiplier (sensitivity)
    seed: int = 0
    layer: int = 1

    def __post_init__(self) -> None:
        if self.technique not in TECHNIQUES:
            raise ConfigError(f"unknown technique {self.technique!r}; expected one of {TECHNIQUES}")
        if self.target not in TARGETS:
            raise ConfigError(f"unknown target {self.target!r}; expected one of {TARGETS}")
        given = {"amount": self.amount is not None, "k": self.k is not None, "lam": self.lam is not None}
        needed = {RANDOM: "amount", GLOBAL_MAGNITUDE: "amount", TOPK: "k", SENSITIVITY: "lam"}[self.technique]
        if not given[needed] or sum(given.values()) != 1:
            raise ConfigError(f"{self.technique} pruning takes exactly the '{needed}' parameter")
        if self.amount is not None and not 0.0 <= self.amount <= 100.0:
            raise ConfigError(f"amount must be in [0, 100], got {self.amount}")
        if self.k is not None and self.k < 0:
            raise ConfigError(f"k must be >= 0, got {self.k}")
        if self.lam is not None and not self.lam > 0.0:
            raise ConfigError(f"lam must be > 0, got {self.lam}")
        if self.technique == SENSITIVITY and self.target != "weight":
            raise ConfigError("sensitivity pruning applies to weight matrices only")


@dataclass
class PruneOutcome:
    entries_removed: int
    pool_size: int
    requested: int
    achieved_sparsity: float
    threshold_used: float | None = None
    clamped: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def quota(p: float, pool_size: int) -> int:
    """round(p/100 * pool_size), halves away from zero, clamped to the pool."""
    if not 0.0 <= p <= 100.0:
        raise ConfigError(f"percentage must be in [0, 100], got {p}")
    return min(pool_size, math.floor(p * pool_size / 100.0 + 0.5))


def prune_random(pool_size: int, p: float, seed: int) -> np.ndarray:
    k = quota(p, pool_size)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(pool_size, size=k, replace=False)).astype(np.int64)


def prune_global_magnitude(values: np.ndarray, p: float) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).ravel()
    k = quota(p, len(values))
    order = np.argsort(np.abs(values), kind="stable")
    return np.sort(order[:k])


def prune_topk_per_row(values: np.ndarray, rows: np.ndarray, k: int) -> np.ndarray:
    """Remove the ``k`` smallest-|value| entries of every row (all of them if fewer)."""
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    values = np.asarray(values, dtype=np.float64).ravel()
    rows = np.asarray(rows, dtype=np.int64).ravel()
    if k == 0 or values.size == 0:
        return np.empty(0, dtype=np.int64)
    pos = np.arange(len(values))
    order = np.lexsort((pos, np.abs(values), rows))
    sorted_rows = rows[order]
    first = np.searchsorted(sorted_rows, sorted_rows, side="left")
    rank = np.arange(len(order)) - first
    return np.sort(order[rank < k])


def prune_sensitivity(values: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Remove entries with |value| < lam * std (sample standard deviation)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if not lam > 0.0:
        raise ConfigError(f"lam must be > 0, got {lam}")
    if values.size < 2:
        raise DegenerateInputError("sensitivity pruning needs at least two nonzero entries")
    threshold = lam * float(np.std(values, ddof=1))
    return np.flatnonzero(np.abs(values) < threshold), threshold


def _select(spec: PruneSpec, values: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, int, float | None]:
    """Dispatch on technique. Returns (pool indices, requested count, threshold)."""
    n = len(values)
    if spec.technique == RANDOM:
        picked = prune_random(n, spec.amount, spec.seed)
        return picked, quota(spec.amount, n), None
    if spec.technique == GLOBAL_MAGNITUDE:
        picked = prune_global_magnitude(values, spec.amount)
        theta = float(np.abs(values[picked]).max()) if len(picked) else None
        return picked, quota(spec.amount, n), theta
    if spec.technique == TOPK:
        picked = prune_topk_per_row(values, rows, spec.k)
        return picked, spec.k * len(np.unique(rows)), None
    if n < 2:
        raise DegenerateInputError("sensitivity pruning needs at least two nonzero entries")
    picked, theta = prune_sensitivity(values, spec.lam)
    return picked, len(picked), theta


def prune_mask(mask: np.ndarray, backing: np.ndarray, spec: PruneSpec) -> tuple[np.ndarray, PruneOutcome]:
    """Switch off pool positions of ``mask`` chosen by ``spec`` over ``|backing|``.

    The pool is the set of positions currently true; bits are never re-enabled.
    """
    if spec.target == "adjacency":
        raise ConfigError("use prune_adjacency for the adjacency matrix")
    if mask.shape != backing.shape:
        raise ConfigError(f"mask {mask.shape} and backing {backing.shape} differ in shape")
    pool = np.flatnonzero(mask)
    values = backing.ravel()[pool]
    rows = pool // mask.shape[1] if mask.ndim == 2 else np.zeros_like(pool)
    picked, requested, theta = _select(spec, values, rows)
    new_mask = mask.copy()
    new_mask.ravel()[pool[picked]] = False
    removed = len(picked)
    return new_mask, PruneOutcome(
        removed, len(pool), requested,
        removed / len(pool) if len(pool) else 0.0, theta, requested > removed,
    )


def _mirror_positions(adj: NormalizedAdjacency) -> np.ndarray:
    """Storage position of (j, i) for every stored (i, j); -1 when absent."""
    m = adj.matrix
    n = m.n_cols
    keys = m.row_indices() * n + m.col_idx  # ascending: row-major sorted storage
    mirror = m.col_idx * n + m.row_indices()
    if not len(keys):
        return np.empty(0, dtype=np.int64)
    at = np.minimum(np.searchsorted(keys, mirror), len(keys) - 1)
    return np.where(keys[at] == mirror, at, -1)


def prune_adjacency(adj: NormalizedAdjacency, spec: PruneSpec,
                    symmetric_pairing: bool | None = None) -> tuple[NormalizedAdjacency, PruneOutcome]:
    """Structurally remove off-diagonal entries of the normalized adjacency.

    Self-loops are never candidates and the remaining values are not
    renormalized. With symmetric pairing (default for symmetric graphs) the
    percentage techniques choose among undirected edges and drop both
    directions; top-k chooses per row and then drops the mirrors too.
    """
    if spec.target != "adjacency":
        raise ConfigError(f"prune spec targets {spec.target!r}, not the adjacency")
    if spec.technique == SENSITIVITY:
        raise ConfigError("sensitivity pruning applies to weight matrices only")
    m = adj.matrix
    pairing = adj.symmetric if symmetric_pairing is None else symmetric_pairing
    rows_all = m.row_indices()
    off = np.flatnonzero(rows_all != m.col_idx)
    mirror = _mirror_positions(adj) if pairing else None

    if pairing and spec.technique != TOPK:
        # one candidate per undirected edge: the (i<j) entry, or a lone entry without mirror
        keep = (rows_all[off] < m.col_idx[off]) | (mirror[off] < 0)
        pool = off[keep]
    else:
        pool = off
    picked, requested, theta = _select(spec, m.values[pool], rows_all[pool])
    positions = pool[picked]
    if pairing:
        mates = mirror[positions]
        positions = np.union1d(positions, mates[mates >= 0])
        requested_entries = 2 * requested if spec.technique != TOPK else requested
    else:
        requested_entries = requested
    removed = len(positions)
    outcome = PruneOutcome(
        removed, len(off), requested_entries,
        removed / len(off) if len(off) else 0.0, theta,
        clamped=requested > len(picked),
    )
    return adj.drop_entries(positions), outcome

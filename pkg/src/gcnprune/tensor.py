"""Dense/CSR matrix types and the counted arithmetic kernels used by the GCN.

Dense matrices are plain ``float64`` numpy arrays and masks are ``bool``
arrays of the same shape. The adjacency lives in :class:`CsrMatrix`, which
stores no explicit zeros so that ``nnz`` is always the number of edges the
cost model should charge for.

Every kernel accepts an optional :class:`OpCounter`. Counts are derived from
operand structure (shape, per-row nonzeros), which is exactly what a naive
loop kernel would execute; the arithmetic itself is delegated to numpy/scipy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import ShapeError


@dataclass
class OpCounter:
    multiplies: int = 0
    additions: int = 0

    def flops(self) -> int:
        return self.multiplies + self.additions

    def macs(self) -> int:
        return self.flops() // 2

    def __iadd__(self, other: "OpCounter") -> "OpCounter":
        self.multiplies += other.multiplies
        self.additions += other.additions
        return self

    def reset(self) -> None:
        self.multiplies = 0
        self.additions = 0


@dataclass(eq=False)
class CsrMatrix:
    """Compressed-sparse-row matrix with sorted, unique columns and no stored zeros."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _scipy: sp.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        rp, ci, v = self.row_ptr, self.col_idx, self.values
        if rp.shape != (self.n_rows + 1,):
            raise ShapeError("row_ptr must have n_rows + 1 entries")
        if rp[0] != 0 or rp[-1] != len(ci) or len(ci) != len(v):
            raise ShapeError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(rp) < 0):
            raise ShapeError("row_ptr must be non-decreasing")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ShapeError("column index out of range")
        # strictly increasing columns inside every row
        if len(ci) > 1:
            step = np.diff(ci)
            row_starts = np.zeros(len(ci), dtype=bool)
            row_starts[rp[1:-1][rp[1:-1] < len(ci)]] = True
            if np.any((step <= 0) & ~row_starts[1:]):
                raise ShapeError("column indices must be strictly increasing within a row")
        if np.any(v == 0.0):
            raise ShapeError("explicit zeros are not allowed in CSR storage")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite value in CSR matrix")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry, in storage order."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), self.row_nnz())

    def to_scipy(self) -> sp.csr_matrix:
        if self._scipy is None:
            self._scipy = sp.csr_matrix(
                (self.values, self.col_idx, self.row_ptr), shape=self.shape
            )
        return self._scipy

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_indices(), self.col_idx] = self.values
        return out

    def get(self, i: int, j: int) -> float:
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        k = np.searchsorted(self.col_idx[lo:hi], j)
        if k < hi - lo and self.col_idx[lo + k] == j:
            return float(self.values[lo + k])
        return 0.0

    def drop_entries(self, positions: np.ndarray) -> "CsrMatrix":
        """Return a copy with the entries at the given storage positions removed."""
        keep = np.ones(self.nnz, dtype=bool)
        keep[np.asarray(positions, dtype=np.int64)] = False
        rows = self.row_indices()[keep]
        counts = np.bincount(rows, minlength=self.n_rows)
        row_ptr = np.concatenate([[0], np.cumsum(counts)])
        return CsrMatrix(self.n_rows, self.n_cols, row_ptr, self.col_idx[keep], self.values[keep])

    def equals(self, other: "CsrMatrix") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )

    @classmethod
    def from_coo(cls, rows, cols, values, shape: tuple[int, int]) -> "CsrMatrix":
        """Build from triplets. Duplicates are summed, zeros dropped."""
        m = sp.coo_matrix(
            (np.asarray(values, dtype=np.float64), (np.asarray(rows), np.asarray(cols))),
            shape=shape,
        ).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls(shape[0], shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        r, c = np.nonzero(a)
        return cls.from_coo(r, c, a[r, c], a.shape)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))


def as_dense(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array and reject non-finite entries."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def mask_density(mask: np.ndarray) -> float:
    mask = np.asarray(mask, dtype=bool)
    return float(mask.sum()) / mask.size if mask.size else 0.0


def dense_matmul(a: np.ndarray, b: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    if counter is not None:
        n, d = a.shape
        f = b.shape[1]
        counter.multiplies += n * d * f
        counter.additions += n * max(d - 1, 0) * f
    return a @ b


def spmm(a: CsrMatrix, b: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    if b.ndim != 2 or a.n_cols != b.shape[0]:
        raise ShapeError(f"cannot multiply CSR {a.shape} by {b.shape}")
    if counter is not None:
        f = b.shape[1]
        counter.multiplies += a.nnz * f
        counter.additions += int(np.maximum(a.row_nnz() - 1, 0).sum()) * f
    return np.asarray(a.to_scipy() @ b)


def csr_transpose(a: CsrMatrix) -> CsrMatrix:
    t = a.to_scipy().T.tocsr()
    t.sort_indices()
    return CsrMatrix(a.n_cols, a.n_rows, t.indptr, t.indices, t.data)


def apply_mask(m: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if m.shape != mask.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match {m.shape}")
    return np.where(mask, m, 0.0)


def relu(m: np.ndarray) -> np.ndarray:
    return np.maximum(m, 0.0)


def relu_backward(grad: np.ndarray, pre_activation: np.ndarray) -> np.ndarray:
    return np.where(pre_activation > 0.0, grad, 0.0)


def log_softmax_rows(m: np.ndarray) -> np.ndarray:
    shifted = m - m.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

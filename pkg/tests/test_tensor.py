import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcnprune.exceptions import ShapeError
from gcnprune.tensor import (
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

from oracles import Tally, csr_rows, naive_matmul, naive_spmm


def random_csr(rng, n_rows, n_cols, density=0.4, full_rows=False):
    dense = np.where(rng.random((n_rows, n_cols)) < density, rng.normal(size=(n_rows, n_cols)), 0.0)
    if full_rows:
        for i in range(n_rows):
            if not dense[i].any():
                dense[i, rng.integers(n_cols)] = 1.0
    return CsrMatrix.from_dense(dense)


# -- counters ------------------------------------------------------------

def test_opcounter_macs_round_down():
    c = OpCounter(3, 2)
    assert c.flops() == 5
    assert c.macs() == 2


def test_scalar_matmul_counts_one_multiply():
    c = OpCounter()
    out = dense_matmul(np.array([[2.0]]), np.array([[3.0]]), c)
    assert out.tolist() == [[6.0]]
    assert (c.multiplies, c.additions, c.flops()) == (1, 0, 1)


def test_identity_matmul_returns_b():
    b = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(dense_matmul(np.eye(3), b), b)


def test_dense_flops_match_triple_loop_count():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    tally = Tally()
    ref = naive_matmul(a.tolist(), b.tolist(), tally)
    c = OpCounter()
    out = dense_matmul(a, b, c)
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-14)
    assert (c.multiplies, c.additions) == (tally.mul, tally.add)
    assert c.flops() == 42


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 9))
def test_dense_flops_formula(n, d, f):
    c = OpCounter()
    dense_matmul(np.ones((n, d)), np.ones((d, f)), c)
    assert c.flops() == 2 * d * f * n - f * n


def test_dense_matmul_shape_error():
    with pytest.raises(ShapeError):
        dense_matmul(np.ones((2, 3)), np.ones((2, 3)))


# -- spmm ----------------------------------------------------------------

def test_spmm_two_node_example():
    a = CsrMatrix.from_dense(np.full((2, 2), 0.5))
    c = OpCounter()
    out = spmm(a, np.eye(2), c)
    np.testing.assert_array_equal(out, np.full((2, 2), 0.5))
    tally = Tally()
    naive_spmm(csr_rows(a), np.eye(2).tolist(), tally)
    assert c.flops() == tally.mul + tally.add == 12


def test_spmm_empty_row_is_zero_and_free():
    a = CsrMatrix.from_dense(np.array([[1.0, 2.0], [0.0, 0.0]]))
    c = OpCounter()
    out = spmm(a, np.ones((2, 3)), c)
    np.testing.assert_array_equal(out[1], 0.0)
    assert c.flops() == 2 * 3 + 1 * 3


def test_spmm_identity():
    b = np.arange(6.0).reshape(3, 2)
    c = OpCounter()
    np.testing.assert_array_equal(spmm(CsrMatrix.identity(3), b, c), b)
    assert (c.multiplies, c.additions) == (6, 0)


def test_spmm_shape_error():
    with pytest.raises(ShapeError):
        spmm(CsrMatrix.identity(3), np.ones((2, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.integers(1, 8), st.integers(1, 5))
def test_spmm_matches_naive_loops(seed, n, k, f):
    rng = np.random.default_rng(seed)
    a = random_csr(rng, n, k)
    b = rng.normal(size=(k, f))
    tally = Tally()
    ref = naive_spmm(csr_rows(a), b.tolist(), tally)
    c = OpCounter()
    np.testing.assert_allclose(spmm(a, b, c), ref, rtol=1e-12, atol=1e-12)
    assert (c.multiplies, c.additions) == (tally.mul, tally.add)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.integers(1, 5))
def test_spmm_full_rows_flops(seed, n, f):
    a = random_csr(np.random.default_rng(seed), n, n, full_rows=True)
    c = OpCounter()
    spmm(a, np.ones((n, f)), c)
    assert c.flops() == 2 * a.nnz * f - n * f


# -- CSR structure -------------------------------------------------------

def test_csr_rejects_explicit_zero():
    with pytest.raises(ValueError):
        CsrMatrix(1, 2, np.array([0, 1]), np.array([0]), np.array([0.0]))


def test_csr_rejects_unsorted_columns():
    with pytest.raises(ValueError):
        CsrMatrix(1, 3, np.array([0, 2]), np.array([2, 0]), np.array([1.0, 1.0]))


def test_from_coo_sums_duplicates():
    m = CsrMatrix.from_coo([0, 0, 1], [1, 1, 0], [1.0, 2.0, 5.0], (2, 2))
    assert m.get(0, 1) == 3.0
    assert m.nnz == 2


def test_transpose_identity():
    assert csr_transpose(CsrMatrix.identity(4)).equals(CsrMatrix.identity(4))


def test_transpose_single_entry():
    a = CsrMatrix.from_coo([0], [1], [2.5], (2, 2))
    t = csr_transpose(a)
    assert t.nnz == 1 and t.get(1, 0) == 2.5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_double_transpose_round_trip(seed):
    rng = np.random.default_rng(seed)
    a = random_csr(rng, 5, 5)
    assert csr_transpose(csr_transpose(a)).equals(a)
    b = rng.normal(size=(5, 3))
    assert np.array_equal(spmm(csr_transpose(csr_transpose(a)), b), spmm(a, b))


def test_transpose_rectangular_matches_dense():
    a = random_csr(np.random.default_rng(1), 3, 6)
    np.testing.assert_array_equal(csr_transpose(a).to_dense(), a.to_dense().T)


# -- elementwise ---------------------------------------------------------

def test_apply_mask_examples():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(apply_mask(m, np.ones((2, 2), bool)), m)
    np.testing.assert_array_equal(apply_mask(m, np.zeros((2, 2), bool)), 0.0)
    out = apply_mask(np.array([[0.5, -0.1], [0.3, 0.2]]), np.array([[True, False], [True, True]]))
    np.testing.assert_array_equal(out, [[0.5, 0.0], [0.3, 0.2]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_apply_mask_idempotent(seed):
    rng = np.random.default_rng(seed)
    m, k = rng.normal(size=(4, 5)), rng.random((4, 5)) < 0.5
    once = apply_mask(m, k)
    assert np.array_equal(apply_mask(once, k), once)


def test_apply_mask_shape_error():
    with pytest.raises(ShapeError):
        apply_mask(np.ones((2, 2)), np.ones((2, 3), bool))


def test_relu_and_backward():
    pre = np.array([[-1.0, 0.0, 2.0]])
    np.testing.assert_array_equal(relu(pre), [[0.0, 0.0, 2.0]])
    np.testing.assert_array_equal(relu_backward(np.full((1, 3), 5.0), pre), [[0.0, 0.0, 5.0]])
    pos = np.array([[0.5, 3.0]])
    np.testing.assert_array_equal(relu(pos), pos)


def test_log_softmax_symmetric_row():
    out = log_softmax_rows(np.array([[0.0, 0.0]]))
    np.testing.assert_allclose(out, [[-math.log(2)] * 2], rtol=0, atol=1e-15)


def test_log_softmax_no_overflow():
    out = log_softmax_rows(np.array([[1000.0, 0.0]]))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [[0.0, -1000.0]], rtol=0, atol=1e-12)


def test_log_softmax_high_precision_oracle():
    mpmath.mp.dps = 50
    row = [1, 2, 3]
    lse = mpmath.log(sum(mpmath.e ** mpmath.mpf(v) for v in row))
    expected = [float(mpmath.mpf(v) - lse) for v in row]
    np.testing.assert_allclose(log_softmax_rows(np.array([row], float))[0], expected, rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 300.0))
def test_log_softmax_rows_normalize(seed, scale):
    x = np.random.default_rng(seed).normal(size=(6, 7)) * scale
    np.testing.assert_allclose(np.exp(log_softmax_rows(x)).sum(axis=1), 1.0, rtol=0, atol=1e-12)

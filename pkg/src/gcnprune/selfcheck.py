"""Quick invariant checks run by ``gcnprune validate``.

These are smoke-level versions of the test-suite properties, cheap enough
to run on any install.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .cost import (
    LayerDims,
    compression_ratio,
    dense_layer_macs,
    measure_layer_macs,
    param_count,
    random_full_row_csr,
)
from .graphs import build_normalized_adjacency, synth_erdos_renyi
from .model import adam_step, backward, forward, init_weights, nll_loss
from .tensor import CsrMatrix, csr_transpose, log_softmax_rows


def _dense_cost_exact(rng) -> bool:
    for _ in range(20):
        f = int(rng.integers(1, 16))
        d = int(rng.integers(f + 1, 33))
        n = int(rng.integers(1, 33))
        m = int(rng.integers(n, n * n + 1))
        a = random_full_row_csr(rng, n, m)
        got = measure_layer_macs(a, rng.normal(size=(n, d)), rng.normal(size=(d, f)))
        if got != dense_layer_macs(LayerDims(n, d, f, m)):
            return False
    return True


def _sparse_bound_sound(rng) -> bool:
    for _ in range(20):
        n = int(rng.integers(4, 17))
        f = int(rng.integers(2, 9))
        d = int(rng.integers(f + 1, 17))
        d_keep, f_keep = int(rng.integers(1, d + 1)), int(rng.integers(1, f + 1))
        k = max(-(-n // d_keep), 1)
        if k * d > n * n:
            continue
        a = random_full_row_csr(rng, n, k * d)
        dense = measure_layer_macs(a, rng.normal(size=(n, d)), rng.normal(size=(d, f)))
        keep_rows = np.flatnonzero(a.row_indices() == a.col_idx)
        extra = np.setdiff1d(np.arange(a.nnz), keep_rows)[: k * d_keep - n]
        a_s = a.drop_entries(np.setdiff1d(np.arange(a.nnz), np.concatenate([keep_rows, extra])))
        sparse = measure_layer_macs(a_s, rng.normal(size=(n, d_keep)), rng.normal(size=(d_keep, f_keep)))
        if Fraction(sparse) > Fraction(d_keep * f_keep, d * f) * dense:
            return False
    return True


def _gradients(rng) -> bool:
    ds = synth_erdos_renyi(6, 0.5, seed=int(rng.integers(1 << 30)), n_classes=3)
    adj = build_normalized_adjacency(ds)
    x = rng.normal(size=(6, 4))
    model = init_weights(4, 3, 3, seed=1, n_nodes=6)
    nodes = np.arange(6)
    cache = forward(model, adj, x)
    grads = backward(model, adj, x, cache, ds.labels, nodes)
    eps = 1e-5
    for w, g in ((model.w1, grads.w1), (model.w2, grads.w2)):
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + eps
            up = nll_loss(forward(model, adj, x).log_probs, ds.labels, nodes)
            w[idx] = old - eps
            down = nll_loss(forward(model, adj, x).log_probs, ds.labels, nodes)
            w[idx] = old
            fd = (up - down) / (2 * eps)
            if abs(fd - g[idx]) > 1e-4 * max(1.0, abs(fd), abs(g[idx])):
                return False
    return True


def _masks(rng) -> bool:
    ds = synth_erdos_renyi(8, 0.4, seed=3)
    adj = build_normalized_adjacency(ds)
    model = init_weights(8, 4, 3, seed=2, n_nodes=8)
    model.mask_w1 = rng.random(model.w1.shape) > 0.5
    model.mask_w2 = rng.random(model.w2.shape) > 0.5
    model.enforce_masks()
    for _ in range(20):
        cache = forward(model, adj, ds.features)
        adam_step(model, backward(model, adj, ds.features, cache, ds.labels, ds.split.train))
    ok = np.all(model.w1[~model.mask_w1] == 0.0) and np.all(model.w2[~model.mask_w2] == 0.0)
    model.mask_h1[:] = False
    return bool(ok and np.all(forward(model, adj, ds.features).logits == 0.0))


def _compression(_rng) -> bool:
    rows = [((1433, 64, 7), 92160, 13825, "6.67"), ((3703, 64, 6), 237376, 23739, "10.00"),
            ((500, 64, 3), 32192, 3220, "10.00")]
    return all(
        param_count(*dims) == total and f"{compression_ratio(total, nz):.2f}" == ratio
        for dims, total, nz, ratio in rows
    )


def _csr_and_softmax(rng) -> bool:
    a = CsrMatrix.from_dense(np.where(rng.random((5, 5)) < 0.4, rng.normal(size=(5, 5)), 0.0))
    if not csr_transpose(csr_transpose(a)).equals(a):
        return False
    lp = log_softmax_rows(rng.normal(size=(4, 6)) * 50)
    return bool(np.allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-12, rtol=0))


CHECKS = {
    "dense_cost_exact": _dense_cost_exact,
    "sparse_bound_sound": _sparse_bound_sound,
    "gradients_match_finite_differences": _gradients,
    "masks_conserved": _masks,
    "compression_table": _compression,
    "csr_transpose_and_log_softmax": _csr_and_softmax,
}


def run_checks(seed: int = 0) -> dict[str, bool]:
    rng = np.random.default_rng(seed)
    return {name: bool(check(rng)) for name, check in CHECKS.items()}


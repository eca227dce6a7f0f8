"""The numba kernels and the numpy fallback must agree iterate for iterate.

Short runs are compared tightly. Over long non-converging runs the two
summation orders drift apart slowly, so those only get a loose bound.
"""

import numpy as np
import pytest

from ssimm import _hot
from ssimm.llise_embed import project_constraints
from ssimm.ssim import SsimConstants

C16 = SsimConstants(16).c


def _recon_batch(rng, m=12, q=16, k=5):
    x = rng.standard_normal((m, q))
    X = rng.standard_normal((m, q, k))
    return x - x.mean(1, keepdims=True), X - X.mean(1, keepdims=True)


def _assert_same(a, b, rtol):
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=rtol, atol=rtol)


@pytest.mark.parametrize("rho", [0.1, 1.0])
@pytest.mark.parametrize("iters,tol", [(25, 1e-10), (400, 1e-7)])
def test_sphere_admm_input(rng, rho, iters, tol):
    x, X = _recon_batch(rng)
    w0 = np.full(5, 1 / np.sqrt(5))
    args = (x, X, C16, rho, 0.1, 1e-6, iters, w0, True)
    a = _hot.sphere_admm_input_nb(*args)
    b = _hot.sphere_admm_input_np(*args)
    np.testing.assert_array_equal(a[6], b[6])  # status
    _assert_same(a, b, tol)


def test_sphere_admm_gram(rng):
    x, X = _recon_batch(rng)
    kxx = np.einsum("pa,pa->p", x, x)
    kvec = np.einsum("pab,pa->pb", X, x)
    K = np.einsum("pab,pac->pbc", X, X)
    w0 = np.full(5, 1 / np.sqrt(5))
    args = (kxx, kvec, K, C16, 0.01, 0.1, 1e-6, 400, w0, True)
    _assert_same(_hot.sphere_admm_gram_nb(*args), _hot.sphere_admm_gram_np(*args), 1e-7)


@pytest.mark.parametrize("n,p", [(10, 2), (30, 4), (6, 5)])
def test_project(rng, n, p):
    A = rng.standard_normal((n, p))
    np.testing.assert_allclose(_hot.project_nb(A), _hot.project_np(A), atol=1e-10)


def test_project_rank_deficient():
    A = np.zeros((8, 3))
    A[:, 0] = np.arange(8.0)
    np.testing.assert_allclose(_hot.project_nb(A), _hot.project_np(A), atol=1e-10)


def _graph(rng, B=3, n=15, k=4, p=2):
    nbr = np.stack([
        np.stack([rng.choice(np.delete(np.arange(n), j), k, replace=False) for j in range(n)])
        for _ in range(B)
    ])
    wts = rng.standard_normal((B, n, k))
    wts /= np.linalg.norm(wts, axis=2, keepdims=True)
    Y0 = np.stack([project_constraints(rng.standard_normal((n, p))) for _ in range(B)])
    return nbr, wts, Y0


def test_theta_sum_grad(rng):
    nbr, wts, Y0 = _graph(rng)
    g = np.empty_like(Y0[0])
    t_nb = _hot.theta_sum_grad_nb(Y0[0], nbr[0], wts[0], C16, g)
    t_np, g_np = _hot.theta_sum_grad_np(Y0[0], nbr[0], wts[0], C16)
    assert t_nb == pytest.approx(t_np, abs=1e-12)
    np.testing.assert_allclose(g, g_np, atol=1e-12)


@pytest.mark.parametrize("iters,tol", [(10, 1e-10), (200, 1e-5)])
def test_embed_admm(rng, iters, tol):
    nbr, wts, Y0 = _graph(rng)
    args = (nbr, wts, Y0, C16, 0.01, 0.01, 1e-5, iters)
    a = _hot.embed_admm_nb(*args)
    b = _hot.embed_admm_np(*args)
    np.testing.assert_array_equal(a[5], b[5])
    _assert_same(a[:6], b[:6], tol)
    # the objective trace passes through transients that magnify rounding
    np.testing.assert_allclose(a[6], b[6], rtol=100 * tol)

"""Unit-norm reconstruction weights under the SSIM distance, solved by ADMM.

For a centred block ``x`` and its neighbour matrix ``X`` (q x k) the weights
minimise ``||x - X w||_S`` subject to ``||w||_2 = 1``. The kernel variant only
needs ``x.x``, ``X^T x`` and ``X^T X`` (or their kernel counterparts), which
is why the batch solvers below accept either form.
"""

from dataclasses import dataclass

import numpy as np

from . import _hot
from .image_blocks import InvalidParameterError
from .kernels import InvalidInputError


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 0.1
    eta: float = 0.1
    max_iter: int = 2000
    tol: float = 1e-6
    seed: int = 0
    exact_fit: bool = True  # short-circuit neighbours that reproduce the target exactly

    def __post_init__(self):
        if not (self.rho > 0 and self.eta > 0 and self.tol > 0):
            raise InvalidParameterError("rho, eta and tol must be positive")
        if self.max_iter < 1:
            raise InvalidParameterError("max_iter must be positive")


# ADMM settings used in the experiments
LLISE_RECON = AdmmConfig(rho=0.1, eta=0.1)
KLLISE_RECON = AdmmConfig(rho=0.01, eta=0.1)


@dataclass
class ReconstructionWeights:
    """Solver output for one block.

    ``w`` is the returned unit-norm weight vector (the feasible ADMM iterate);
    ``w_iter`` is the last unconstrained iterate and ``dual`` the scaled dual.
    """

    w: np.ndarray
    w_iter: np.ndarray
    dual: np.ndarray
    iterations_run: int
    final_residual: float
    objective: float
    converged: bool
    trace_w: np.ndarray = None
    trace_f: np.ndarray = None

    @property
    def xi(self):
        return self.w


def recon_objective(w, x, X, c):
    """SSIM distance between ``x`` and the reconstruction ``X @ w``."""
    w = np.asarray(w, dtype=np.float64)
    r = X @ w
    xx = x @ x
    rr = r @ r
    return float((xx + rr - 2.0 * (x @ r)) / (xx + rr + c))


def recon_gradient(w, x, X, c):
    w = np.asarray(w, dtype=np.float64)
    r = X @ w
    xx = x @ x
    rr = r @ r
    den = xx + rr + c
    f = (xx + rr - 2.0 * (x @ r)) / den
    return 2.0 * X.T @ ((1.0 - f) * r - x) / den


def kernel_objective(w, kxx, kvec, Kmat, c):
    w = np.asarray(w, dtype=np.float64)
    wKw = w @ Kmat @ w
    return float((kxx + wKw - 2.0 * (w @ kvec)) / (kxx + wKw + c))


def kernel_gradient(w, kxx, kvec, Kmat, c):
    w = np.asarray(w, dtype=np.float64)
    Kw = Kmat @ w
    wKw = w @ Kw
    den = kxx + wKw + c
    f = (kxx + wKw - 2.0 * (w @ kvec)) / den
    return 2.0 * ((1.0 - f) * Kw - kvec) / den


def _initial(k):
    return np.full(k, 1.0 / np.sqrt(k))


# one-hot fits at or below this SSIM distance count as exact copies
EXACT_FIT = 1e-12


def onehot_fits(kxx, kdiag, kvec, c):
    """``f(e_r)`` for every neighbour ``r`` of every problem, shape (m, k)."""
    kxx = np.asarray(kxx)[:, None]
    return np.maximum(kxx - 2.0 * kvec + kdiag, 0.0) / (kxx + kdiag + c)


def _apply_exact_fit(out, fits):
    """Replace solutions of problems with an exact-copy neighbour by its one-hot.

    When the target coincides with a neighbour, ``e_r`` attains the global
    minimum 0 of the objective on the sphere. The iteration from the uniform
    start may not find it (with several identical neighbours the gradient
    stays parallel to the all-ones vector), so it is returned directly.
    """
    xi, w, u, iters, resid, fval, status, tw, tf = out
    ok = fits <= EXACT_FIT
    # first qualifying neighbour, not the argmin: the residuals are rounding noise
    r = np.argmax(ok, axis=1)
    hit = np.flatnonzero(ok.any(axis=1))
    if hit.size:
        for a in (xi, w, u):
            a[hit] = 0.0
        xi[hit, r[hit]] = 1.0
        w[hit, r[hit]] = 1.0
        iters[hit] = 0
        resid[hit] = 0.0
        fval[hit] = fits[hit, r[hit]]
        status[hit] = _hot.CONVERGED
    return out


def _unpack(out, trace, raise_on_divergence=True):
    xi, w, u, iters, resid, fval, status, tw, tf = out
    if raise_on_divergence and np.any(status == _hot.DIVERGED):
        bad = int(np.flatnonzero(status == _hot.DIVERGED)[0])
        raise DivergenceError(
            f"non-finite iterate in problem {bad} at iteration {int(iters[bad])}"
        )
    results = []
    for p in range(xi.shape[0]):
        results.append(
            ReconstructionWeights(
                w=xi[p],
                w_iter=w[p],
                dual=u[p],
                iterations_run=int(iters[p]),
                final_residual=float(resid[p]),
                objective=float(fval[p]),
                converged=bool(status[p] == _hot.CONVERGED),
                trace_w=tw[p, : iters[p]] if trace else None,
                trace_f=tf[p, : iters[p]] if trace else None,
            )
        )
    return results


def solve_weights_batch(x, X, c, config=LLISE_RECON, trace=False):
    """Solve ``m`` independent input-space problems.

    ``x`` is (m, q), ``X`` is (m, q, k). Problems run in parallel on the numba
    backend.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if x.ndim != 2 or X.ndim != 3 or X.shape[:2] != x.shape:
        raise InvalidParameterError("expected x (m, q) and X (m, q, k)")
    k = X.shape[2]
    out = _hot.sphere_admm_input(
        x, X, float(c), config.rho, config.eta, config.tol, config.max_iter,
        _initial(k), bool(trace),
    )
    if config.exact_fit:
        fits = onehot_fits(
            np.einsum("mq,mq->m", x, x), np.einsum("mqk,mqk->mk", X, X),
            np.einsum("mqk,mq->mk", X, x), c,
        )
        out = _apply_exact_fit(out, fits)
    return _unpack(out, trace)


def _check_psd_sym(K):
    if np.max(np.abs(K - np.swapaxes(K, -1, -2))) > 1e-8:
        raise InvalidInputError("neighbourhood kernel matrix is not symmetric")


def solve_weights_kernel_batch(kxx, kvec, Kmat, c, config=KLLISE_RECON, trace=False):
    """Kernel-form batch solver: ``kxx`` (m,), ``kvec`` (m, k), ``Kmat`` (m, k, k)."""
    kxx = np.ascontiguousarray(kxx, dtype=np.float64)
    kvec = np.ascontiguousarray(kvec, dtype=np.float64)
    Kmat = np.ascontiguousarray(Kmat, dtype=np.float64)
    _check_psd_sym(Kmat)
    k = kvec.shape[1]
    out = _hot.sphere_admm_gram(
        kxx, kvec, Kmat, float(c), config.rho, config.eta, config.tol,
        config.max_iter, _initial(k), bool(trace),
    )
    if config.exact_fit:
        out = _apply_exact_fit(out, onehot_fits(kxx, np.einsum("mkk->mk", Kmat), kvec, c))
    return _unpack(out, trace)


def solve_weights(x, X, c, config=LLISE_RECON, trace=False):
    """Reconstruct one centred block ``x`` (q,) from neighbours ``X`` (q, k)."""
    x = np.asarray(x, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != x.shape[0]:
        raise InvalidParameterError("X must be (q, k) with q = len(x)")
    return solve_weights_batch(x[None], X[None], c, config, trace)[0]


def solve_weights_kernel(kxx, kvec, Kmat, c, config=KLLISE_RECON, trace=False):
    kvec = np.asarray(kvec, dtype=np.float64)
    Kmat = np.asarray(Kmat, dtype=np.float64)
    if Kmat.shape != (kvec.size, kvec.size):
        raise InvalidParameterError("Kmat must be k x k")
    return solve_weights_kernel_batch(
        np.array([kxx], dtype=np.float64), kvec[None], Kmat[None], c, config, trace
    )[0]


def solve_weights_oos(x_query, X_train_nbrs=None, c=None, config=LLISE_RECON,
                      kernel_pieces=None, trace=False):
    """Out-of-sample reconstruction from training neighbours.

    Pass either the neighbour matrix ``X_train_nbrs`` (q x k) or
    ``kernel_pieces = (k_zz, kvec, Kmat)``; the problem is the same as for
    training blocks, only the neighbours come from the training set.
    """
    if kernel_pieces is not None:
        kzz, kvec, Kmat = kernel_pieces
        return solve_weights_kernel(kzz, kvec, Kmat, c, config, trace)
    return solve_weights(x_query, X_train_nbrs, c, config, trace)

"""Closed-form LLE and kernel LLE.

Used as a comparison baseline (on whole image vectors) and as an oracle for
the graph and embedding plumbing shared with LLISE.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .image_blocks import InvalidParameterError


class NumericalError(ArithmeticError):
    pass


REG = 1e-3


@dataclass(frozen=True)
class LleWeights:
    w: np.ndarray
    G: np.ndarray
    regularization: float


@dataclass(frozen=True)
class LleEmbedding:
    Y: np.ndarray  # (n, p)
    M: np.ndarray  # (n, n)
    eigenvalues: np.ndarray  # (p,) kept, ascending


def _singular(G):
    k = G.shape[0]
    s = np.linalg.svd(G, compute_uv=False)
    return s[-1] <= s[0] * k * np.finfo(float).eps if s[0] > 0 else True


def _solve_kkt(G):
    """Minimum-norm solution of ``min w^T G w`` s.t. ``1^T w = 1`` (G may be singular)."""
    k = G.shape[0]
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = G
    A[:k, k] = A[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = linalg.lstsq(A, rhs)[0]
    return sol[:k]


def _solve_local(G, reg=None):
    """Sum-to-one weights from the local gram.

    ``reg=None`` adds ``1e-3 * tr(G) / k`` to the diagonal when ``G`` is
    singular; ``reg=0`` solves the constrained problem exactly instead.
    """
    G = 0.5 * (G + G.T)
    k = G.shape[0]
    if k < 1:
        raise InvalidParameterError("need at least one neighbour")
    d = np.diag(G)
    hit = d <= 1e-14 * max(float(d.max()), 1.0)
    if hit.any():
        # query coincides with neighbour(s): the one-hot limit of the
        # regularised solve, taken exactly
        w = hit / hit.sum()
        return LleWeights(w=w.astype(np.float64), G=G, regularization=0.0)
    if reg == 0:
        w = _solve_kkt(G)
        if not np.all(np.isfinite(w)):
            raise NumericalError("local gram solve produced non-finite weights")
        return LleWeights(w=w / w.sum(), G=G, regularization=0.0)
    eps = 0.0
    if reg is not None:
        eps = float(reg)
    elif _singular(G):
        eps = REG * np.trace(G) / k
    A = G + eps * np.eye(k)
    try:
        w = linalg.solve(A, np.ones(k), assume_a="sym")
    except linalg.LinAlgError as exc:
        raise NumericalError(f"local gram is singular: {exc}") from exc
    s = w.sum()
    if not np.isfinite(s) or s == 0:
        raise NumericalError("local gram solve produced degenerate weights")
    return LleWeights(w=w / s, G=G, regularization=eps)


def lle_weights(x, X, reg=None):
    """Sum-to-one weights reconstructing ``x`` (q,) from columns of ``X`` (q, k)."""
    x = np.asarray(x, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != x.shape[0]:
        raise InvalidParameterError("X must be (q, k) with q = len(x)")
    D = x[:, None] - X
    return _solve_local(D.T @ D, reg)


def klle_gram(kxx, kvec, Kmat):
    """``K_j(a, b) = k(x, x) - k(x, x_a) - k(x, x_b) + k(x_a, x_b)``."""
    kvec = np.asarray(kvec, dtype=np.float64)
    return kxx - kvec[:, None] - kvec[None, :] + np.asarray(Kmat, dtype=np.float64)


def klle_weights(kxx, kvec, Kmat, reg=None):
    """Kernel LLE weights from ``k(x, x)``, ``k(x, x_a)`` and ``k(x_a, x_b)``."""
    return _solve_local(klle_gram(kxx, kvec, Kmat), reg)


def weight_matrix(neighbors, weights, n):
    W = np.zeros((n, n))
    for j, (nb, w) in enumerate(zip(neighbors, weights)):
        np.add.at(W[j], nb, w)
    return W


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def lle_embed(W, p):
    """Bottom eigenvectors 2..p+1 of ``(I - W)^T (I - W)``."""
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    if not 1 <= p < n:
        raise InvalidParameterError(f"p={p} must satisfy 1 <= p < n={n}")
    A = np.eye(n) - W
    M = A.T @ A
    M = 0.5 * (M + M.T)
    try:
        vals, vecs = linalg.eigh(M)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    Y = _fix_signs(vecs[:, 1 : p + 1])
    return LleEmbedding(Y=Y, M=M, eigenvalues=vals[1 : p + 1])


def lle_oos(weights, neighbor_embeddings):
    """Embed a query as the weighted sum of its neighbours' rows."""
    if isinstance(weights, LleWeights):
        weights = weights.w
    return np.asarray(weights) @ np.asarray(neighbor_embeddings, dtype=np.float64)

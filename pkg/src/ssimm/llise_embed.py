"""Embedding of one block index under the SSIM distance.

The rows of ``Y`` (n x p) are the embedded blocks. The objective is the sum
over images of ``theta_j(Y) = ||Y^T 1_j - Y^T w_j||_S`` and the constraints
are zero column means and ``Y^T Y / n = I``.

``M_j = 1_j 1_j^T + w_j w_j^T - 2 1_j w_j^T`` is not symmetric, so the
gradient of ``tr(Y^T M_j Y)`` is ``(M_j + M_j^T) Y``. :func:`theta_gradient`
therefore uses the symmetric part of ``M_j``; the objective value is the same
for either form.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _hot
from .image_blocks import InvalidParameterError
from .llise_reconstruct import AdmmConfig, DivergenceError

LLISE_EMBED = AdmmConfig(rho=0.01, eta=0.01, max_iter=5000, tol=1e-5)


@dataclass(frozen=True)
class SparseWeightRow:
    """Reconstruction weights of image ``j`` scattered to image indices."""

    j: int
    neighbors: np.ndarray
    weights: np.ndarray
    n: int

    def __post_init__(self):
        nb = np.asarray(self.neighbors, dtype=np.int64)
        if np.any(nb == self.j):
            raise InvalidParameterError("an image cannot be its own neighbour")
        object.__setattr__(self, "neighbors", nb)
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))

    def dense(self):
        w = np.zeros(self.n)
        np.add.at(w, self.neighbors, self.weights)
        return w

    def onehot(self):
        e = np.zeros(self.n)
        e[self.j] = 1.0
        return e


@dataclass(frozen=True)
class EmbedOperators:
    """Dense ``M`` and ``Psi`` for one row; only used for checks and tests."""

    M: np.ndarray
    Psi: np.ndarray

    @classmethod
    def from_row(cls, row):
        e = row.onehot()
        w = row.dense()
        M = np.outer(e, e) + np.outer(w, w) - 2.0 * np.outer(e, w)
        return cls(M=M, Psi=M + 2.0 * np.outer(e, w))


def _ab(Y, row):
    a = Y[row.j]
    b = row.weights @ Y[row.neighbors]
    return a, b


def theta(Y, row, c):
    """``tr(Y^T M Y) / (tr(Y^T Psi Y) + c)`` via the two p-vectors it depends on."""
    a, b = _ab(np.asarray(Y, dtype=np.float64), row)
    d = a - b
    return float(d @ d / (a @ a + b @ b + c))


def theta_gradient(Y, row, c):
    """``2 / (tr(Y^T Psi Y) + c) * (sym(M) - theta * Psi) @ Y`` in rank-2 form."""
    Y = np.asarray(Y, dtype=np.float64)
    a, b = _ab(Y, row)
    d = a - b
    den = a @ a + b @ b + c
    th = d @ d / den
    G = np.zeros_like(Y)
    G[row.j] += (2.0 / den) * (d - th * a)
    np.add.at(G, row.neighbors, (2.0 / den) * np.outer(row.weights, -d - th * b))
    return G


def theta_dense(Y, ops, c):
    """Literal trace-ratio evaluation from materialised operators."""
    return float(np.trace(Y.T @ ops.M @ Y) / (np.trace(Y.T @ ops.Psi @ Y) + c))


def theta_gradient_dense(Y, ops, c):
    Ms = 0.5 * (ops.M + ops.M.T)
    den = np.trace(Y.T @ ops.Psi @ Y) + c
    th = np.trace(Y.T @ ops.M @ Y) / den
    return (2.0 / den) * (Ms - th * ops.Psi) @ Y


def project_constraints(A):
    """Nearest matrix with zero column means and singular values ``sqrt(n)``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or not A.shape[0] > A.shape[1] >= 1:
        raise InvalidParameterError("project_constraints needs an n x p matrix with n > p >= 1")
    return _hot.project(A)


def constraint_residuals(V):
    """``(max |V^T 1|, max |V^T V / n - I|)``."""
    n, p = V.shape
    return (
        float(np.max(np.abs(V.sum(axis=0)))),
        float(np.max(np.abs(V.T @ V / n - np.eye(p)))),
    )


@dataclass
class EmbeddingMatrix:
    Y: np.ndarray  # returned embedding (the feasible iterate V)
    Y_iter: np.ndarray
    J: np.ndarray
    converged: bool
    iterations_run: int
    final_residual: float
    objective_trace: np.ndarray = field(repr=False)
    initial_objective: float = float("nan")

    @property
    def V(self):
        return self.Y


def rows_to_arrays(rows):
    nbr = np.stack([r.neighbors for r in rows]).astype(np.int64)
    wts = np.stack([r.weights for r in rows]).astype(np.float64)
    return nbr, wts


def initial_embedding(n, p, seed, block_index=0):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(block_index)]))
    return project_constraints(rng.standard_normal((n, p)))


def solve_embedding_batch(nbr, wts, p, c, config=LLISE_EMBED, block_indices=None):
    """Embed several block indices at once.

    ``nbr``/``wts`` are (B, n, k). Block ``i`` is initialised from
    ``SeedSequence([config.seed, block_indices[i]])`` so results do not depend
    on how blocks are batched.
    """
    nbr = np.ascontiguousarray(nbr, dtype=np.int64)
    wts = np.ascontiguousarray(wts, dtype=np.float64)
    B, n, _ = nbr.shape
    if not 1 <= p < n:
        raise InvalidParameterError(f"embedding dimension p={p} must satisfy 1 <= p < n={n}")
    if block_indices is None:
        block_indices = range(B)
    Y0 = np.stack([initial_embedding(n, p, config.seed, i) for i in block_indices])
    Vs, Ys, Js, iters, resid, status, traces = _hot.embed_admm(
        nbr, wts, Y0, float(c), config.rho, config.eta, config.tol, config.max_iter
    )
    if np.any(status == _hot.DIVERGED):
        bad = int(np.flatnonzero(status == _hot.DIVERGED)[0])
        raise DivergenceError(
            f"embedding diverged for block {bad} at iteration {int(iters[bad])}"
        )
    out = []
    for i in range(B):
        init_obj, _ = _hot.theta_sum_grad(Y0[i], nbr[i], wts[i], float(c))
        out.append(
            EmbeddingMatrix(
                Y=Vs[i],
                Y_iter=Ys[i],
                J=Js[i],
                converged=bool(status[i] == _hot.CONVERGED),
                iterations_run=int(iters[i]),
                final_residual=float(resid[i]),
                objective_trace=traces[i, : iters[i]].copy(),
                initial_objective=float(init_obj),
            )
        )
    return out


def solve_embedding(rows, p, c, config=LLISE_EMBED, block_index=0):
    """Embed one block index from its ``n`` sparse weight rows."""
    rows = sorted(rows, key=lambda r: r.j)
    if [r.j for r in rows] != list(range(len(rows))):
        raise InvalidParameterError("need exactly one weight row per image")
    nbr, wts = rows_to_arrays(rows)
    return solve_embedding_batch(nbr[None], wts[None], p, c, config, [block_index])[0]


def objective_sum(Y, rows, c):
    return sum(theta(Y, r, c) for r in rows)


def embed_oos(weights, neighbor_embeddings):
    """Weighted combination of the neighbours' embedded rows."""
    w = np.asarray(weights, dtype=np.float64)
    E = np.asarray(neighbor_embeddings, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] != w.size:
        raise InvalidParameterError("need one embedding row per weight")
    return w @ E

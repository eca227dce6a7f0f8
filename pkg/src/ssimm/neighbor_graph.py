"""Exact k-NN graphs over the n training images, one graph per block index.

Ties are broken by ascending image index everywhere (stable sort on the
distance row), so neighbour lists are reproducible.
"""

from dataclasses import dataclass

import numpy as np

from .image_blocks import InvalidParameterError
from .kernels import InvalidInputError, _check_symmetric


@dataclass(frozen=True)
class NeighborGraph:
    """``neighbors[j]`` lists the k nearest other images of image j, nearest first."""

    k: int
    neighbors: np.ndarray  # (n, k) int
    distances: np.ndarray  # (n, k) float, non-negative


def pairwise_sq_dists(A, B=None):
    """Squared Euclidean distances between rows, by explicit differences."""
    A = np.asarray(A, dtype=np.float64)
    B = A if B is None else np.asarray(B, dtype=np.float64)
    out = np.empty((A.shape[0], B.shape[0]))
    for a in range(A.shape[0]):
        diff = B - A[a]
        out[a] = np.einsum("ij,ij->i", diff, diff)
    return out


def _select(D2, k, exclude_self):
    n_q, n = D2.shape
    D2 = D2.copy()
    if exclude_self:
        np.fill_diagonal(D2, np.inf)
    order = np.argsort(D2, axis=1, kind="stable")[:, :k]
    d = np.sqrt(np.maximum(np.take_along_axis(D2, order, axis=1), 0.0))
    return NeighborGraph(k=k, neighbors=order.astype(np.int64), distances=d)


def knn_from_sq_dists(D2, k, exclude_self=True):
    n = D2.shape[1]
    limit = n - 1 if exclude_self else n
    if not 1 <= k <= limit:
        raise InvalidParameterError(f"k={k} must satisfy 1 <= k <= {limit}")
    return _select(D2, k, exclude_self)


def knn_euclidean(blocks, k):
    """k-NN among the rows of ``blocks`` (n x q), excluding each row itself."""
    blocks = np.asarray(blocks, dtype=np.float64)
    n = blocks.shape[0]
    if k >= n or k < 1:
        raise InvalidParameterError(f"k={k} must satisfy 1 <= k < n={n}")
    return _select(pairwise_sq_dists(blocks), k, True)


def kernel_sq_dists(K):
    diag = np.diag(K)
    return np.maximum(diag[:, None] - 2.0 * K + diag[None, :], 0.0)


def knn_kernel(gram, k):
    """k-NN in feature space, distances from the gram via the kernel trick."""
    K = gram.K if hasattr(gram, "K") else gram
    K = _check_symmetric(K)
    n = K.shape[0]
    if k >= n or k < 1:
        raise InvalidParameterError(f"k={k} must satisfy 1 <= k < n={n}")
    return _select(kernel_sq_dists(K), k, True)


def knn_oos(queries, train, k, cross=None, train_gram=None):
    """k nearest training rows for each query row.

    With ``cross`` (a :class:`ssimm.kernels.CrossKernel`) and ``train_gram``
    the feature-space distance is used instead of the Euclidean one.
    """
    if cross is not None:
        Ktr = train_gram.K if hasattr(train_gram, "K") else np.asarray(train_gram)
        n = Ktr.shape[0]
        D2 = cross.self_k[:, None] - 2.0 * cross.cross + np.diag(Ktr)[None, :]
        D2 = np.maximum(D2, 0.0)
    else:
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        train = np.atleast_2d(np.asarray(train, dtype=np.float64))
        n = train.shape[0]
        D2 = pairwise_sq_dists(queries, train)
    if k > n or k < 1:
        raise InvalidParameterError(f"k={k} must satisfy 1 <= k <= n={n}")
    return _select(D2, k, False)


__all__ = [
    "NeighborGraph",
    "InvalidInputError",
    "knn_euclidean",
    "knn_kernel",
    "knn_oos",
    "knn_from_sq_dists",
    "pairwise_sq_dists",
    "kernel_sq_dists",
]

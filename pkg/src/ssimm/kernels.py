"""Kernel functions, gram normalisation/double-centering and neighbourhood pieces.

Kernel LLISE never touches feature vectors. Everything it needs for block
index ``i`` is read from one normalised, double-centred ``n x n`` gram, and
out-of-sample queries are pushed through the same transform with the
training statistics frozen.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .image_blocks import InvalidParameterError


class InvalidInputError(ValueError):
    pass


class KernelKind(str, Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    RBF = "rbf"
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class Kernel:
    kind: KernelKind
    gamma: float = 1.0
    degree: int = 3

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not self.gamma > 0:
            raise InvalidParameterError("kernel gamma must be positive")

    @classmethod
    def for_block_length(cls, kind, q):
        """Kernel with ``gamma = 1 / q``."""
        return cls(KernelKind(kind), gamma=1.0 / q)

    def matrix(self, A, B):
        """Kernel values between the rows of ``A`` (m x q) and ``B`` (n x q)."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if A.shape[1] != B.shape[1]:
            raise InvalidParameterError("kernel arguments must have equal length")
        kind = self.kind
        if kind is KernelKind.RBF:
            sq = (
                np.einsum("ij,ij->i", A, A)[:, None]
                + np.einsum("ij,ij->i", B, B)[None, :]
                - 2.0 * A @ B.T
            )
            return np.exp(-self.gamma * np.maximum(sq, 0.0))
        inner = A @ B.T
        if kind is KernelKind.LINEAR:
            return inner
        if kind is KernelKind.POLYNOMIAL:
            return (self.gamma * inner + 1.0) ** self.degree
        return np.tanh(self.gamma * inner + 1.0)

    def gram(self, X):
        K = self.matrix(X, X)
        return 0.5 * (K + K.T)

    def __call__(self, x1, x2):
        return float(self.matrix(x1, x2)[0, 0])


def kernel_eval(kernel, x1, x2):
    return kernel(x1, x2)


@dataclass(frozen=True)
class KernelGram:
    """Training gram after optional normalisation and double-centering.

    The extra fields are exactly the statistics an out-of-sample query needs
    to be mapped consistently: the raw diagonal (for normalisation) and the
    column means / grand mean of the normalised gram (for centering).
    """

    K: np.ndarray
    normalized: bool
    centered: bool
    raw_diag: np.ndarray
    col_means: np.ndarray
    grand_mean: float


def _check_symmetric(K, tol=1e-9):
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidInputError("gram must be square")
    if K.size and np.max(np.abs(K - K.T)) > tol:
        raise InvalidInputError("gram matrix is not symmetric")
    return K


def normalize_center(K_raw, normalize=True, center=True):
    """Cosine-normalise, then double-centre ``K <- H K H``."""
    K = _check_symmetric(K_raw)
    diag = np.diag(K).copy()
    if normalize:
        if np.any(diag <= 0):
            raise InvalidInputError("normalisation needs a positive diagonal")
        s = 1.0 / np.sqrt(diag)
        K = K * s[:, None] * s[None, :]
    col_means = K.mean(axis=0)
    grand = float(col_means.mean())
    if center:
        K = K - col_means[None, :] - col_means[:, None] + grand
    K = 0.5 * (K + K.T)
    return KernelGram(
        K=K,
        normalized=normalize,
        centered=center,
        raw_diag=diag,
        col_means=col_means,
        grand_mean=grand,
    )


def double_center(K):
    """Explicit ``H K H`` (dense), kept for tests and small problems."""
    n = K.shape[0]
    H = np.eye(n) - np.full((n, n), 1.0 / n)
    return H @ K @ H


def extract_neighborhood(gram, j, neighbors):
    """``(K[j, j], K[nbrs, j], K[nbrs][:, nbrs])`` from the processed gram."""
    K = gram.K if isinstance(gram, KernelGram) else np.asarray(gram)
    n = K.shape[0]
    nb = np.asarray(neighbors, dtype=np.intp)
    if not 0 <= j < n or nb.size == 0 or nb.min() < 0 or nb.max() >= n:
        raise IndexError("neighbour or image index out of range")
    return float(K[j, j]), K[nb, j].copy(), K[np.ix_(nb, nb)].copy()


@dataclass(frozen=True)
class CrossKernel:
    """Processed kernel values between queries and the training set.

    ``self_k[t]`` is ``k(z_t, z_t)`` and ``cross[t, a]`` is ``k(z_t, x_a)``,
    both normalised and centred with the training statistics.
    """

    self_k: np.ndarray
    cross: np.ndarray


def cross_kernel_oos(kernel, queries, train, gram):
    """Map query blocks into the training gram's normalised, centred space."""
    Z = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    X = np.atleast_2d(np.asarray(train, dtype=np.float64))
    C = kernel.matrix(Z, X)
    zz = np.array([kernel(z, z) for z in Z]) if len(Z) else np.zeros(0)
    if gram.normalized:
        if np.any(zz <= 0):
            raise InvalidInputError("query has non-positive self-kernel")
        C = C / np.sqrt(zz[:, None] * gram.raw_diag[None, :])
        zz = np.ones_like(zz)
    if gram.centered:
        row = C.mean(axis=1)
        C = C - row[:, None] - gram.col_means[None, :] + gram.grand_mean
        zz = zz - 2.0 * row + gram.grand_mean
    return CrossKernel(self_k=zz, cross=C)


def oos_neighborhood(cross, gram, t, neighbors):
    """Per-query pieces for the kernel out-of-sample reconstruction."""
    nb = np.asarray(neighbors, dtype=np.intp)
    K = gram.K
    return float(cross.self_k[t]), cross.cross[t, nb].copy(), K[np.ix_(nb, nb)].copy()

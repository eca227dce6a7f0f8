"""SSIM index and the zero-mean SSIM distance used by every LLISE objective."""

from dataclasses import dataclass

import numpy as np

from .image_blocks import InvalidParameterError


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class SsimConstants:
    """Stabilising constants for blocks of length ``q`` in intensity range [0, l].

    ``c = (q - 1) * c2`` is the constant of the zero-mean form; carrying ``q``
    here keeps it tied to the block length it was derived for.
    """

    q: int
    l: float = 1.0

    def __post_init__(self):
        if self.q < 2:
            raise InvalidParameterError("SSIM needs q >= 2 (sample variance uses q - 1)")
        if self.l <= 0:
            raise InvalidParameterError("dynamic range must be positive")

    @property
    def c1(self):
        return (0.01 * self.l) ** 2

    @property
    def c2(self):
        return (0.03 * self.l) ** 2

    @property
    def c3(self):
        return self.c2 / 2.0

    @property
    def c(self):
        return (self.q - 1) * self.c2


def ssim_full(x1, x2, consts=None):
    """Luminance x contrast x structure SSIM between two length-q vectors."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    q = x1.size
    if q < 2:
        raise InvalidParameterError("SSIM needs q >= 2")
    if x2.size != q:
        raise InvalidParameterError("vectors must have equal length")
    if consts is None:
        consts = SsimConstants(q)
    mu1, mu2 = x1.mean(), x2.mean()
    d1, d2 = x1 - mu1, x2 - mu2
    var1 = d1 @ d1 / (q - 1)
    var2 = d2 @ d2 / (q - 1)
    cov = d1 @ d2 / (q - 1)
    s1, s2 = np.sqrt(var1), np.sqrt(var2)
    c1, c2, c3 = consts.c1, consts.c2, consts.c3
    lum = (2 * mu1 * mu2 + c1) / (mu1**2 + mu2**2 + c1)
    con = (2 * s1 * s2 + c2) / (var1 + var2 + c2)
    struct = (cov + c3) / (s1 * s2 + c3)
    return float(lum * con * struct)


def ssim_distance(x1, x2, consts=None, check_mean=True):
    """Squared SSIM distance ``||x1 - x2||^2 / (||x1||^2 + ||x2||^2 + c)``.

    Equals ``1 - SSIM`` when both inputs are zero-mean, which is checked
    unless ``check_mean`` is False (the embedding objective applies the same
    ratio to embedded vectors that are not zero-mean).
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise InvalidParameterError("vectors must have equal length")
    if consts is None:
        consts = SsimConstants(x1.size)
    if check_mean:
        if consts.q != x1.size:
            raise InvalidParameterError(
                f"constants built for q={consts.q}, got length {x1.size}"
            )
        if abs(x1.mean()) > 1e-9 or abs(x2.mean()) > 1e-9:
            raise PreconditionError("ssim_distance requires zero-mean inputs")
    n1 = x1 @ x1
    n2 = x2 @ x2
    if n1 < 1e-15 and n2 < 1e-15:
        return 0.0
    diff = x1 - x2
    return float(diff @ diff / (n1 + n2 + consts.c))

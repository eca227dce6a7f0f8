import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssimm.image_blocks import InvalidParameterError
from ssimm.ssim import PreconditionError, SsimConstants, ssim_distance, ssim_full


def zm(rng, q):
    x = rng.standard_normal(q)
    return x - x.mean()


def test_constants():
    k = SsimConstants(16)
    assert (k.c1, k.c2, k.c3) == pytest.approx((1e-4, 9e-4, 4.5e-4))
    assert k.c == pytest.approx(15 * 9e-4)
    with pytest.raises(InvalidParameterError):
        SsimConstants(1)


def test_ssim_full_identity(rng):
    x = rng.random(16)
    assert ssim_full(x, x) == pytest.approx(1.0)


def test_ssim_full_worked_example():
    x1 = [0.1, 0.2, 0.3, 0.4]
    x2 = [0.4, 0.3, 0.2, 0.1]
    # hand evaluation: equal means and variances, covariance = -variance
    mu = 0.25
    var = sum((v - mu) ** 2 for v in x1) / 3
    c1, c2, c3 = 1e-4, 9e-4, 4.5e-4
    lum = (2 * mu * mu + c1) / (2 * mu * mu + c1)
    con = (2 * var + c2) / (2 * var + c2)
    struct = (-var + c3) / (var + c3)
    assert ssim_full(x1, x2) == pytest.approx(lum * con * struct, rel=1e-12)


def test_ssim_full_rejects_short():
    with pytest.raises(InvalidParameterError):
        ssim_full([0.1], [0.2])


def test_distance_worked_example():
    d = ssim_distance([1.0, -1.0], [2.0, -2.0], SsimConstants(2))
    assert d == pytest.approx(2.0 / (2.0 + 8.0 + 9e-4), rel=1e-12)
    assert d == pytest.approx(0.199982, abs=1e-6)


def test_distance_identity_and_symmetry(rng):
    a, b = zm(rng, 16), zm(rng, 16)
    assert ssim_distance(a, a) == 0.0
    assert ssim_distance(a, b) == ssim_distance(b, a)


def test_distance_requires_zero_mean():
    with pytest.raises(PreconditionError):
        ssim_distance([1.0, 2.0], [0.5, -0.5])


@given(st.integers(2, 32), st.integers(0, 2**32 - 1))
def test_distance_equals_one_minus_ssim(q, seed):
    rng = np.random.default_rng(seed)
    a, b = zm(rng, q), zm(rng, q)
    assert ssim_distance(a, b) == pytest.approx(1.0 - ssim_full(a, b), rel=1e-9, abs=1e-12)
    assert 0.0 <= ssim_distance(a, b) <= 2.0

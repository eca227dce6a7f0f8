import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssimm import kernels as kern
from ssimm.kernels import Kernel, KernelKind


def test_rbf_self_is_one(rng):
    x = rng.random(8)
    assert Kernel(KernelKind.RBF, 0.3)(x, x) == 1.0


def test_gamma_from_block_length():
    assert Kernel.for_block_length("rbf", 64).gamma == 0.015625


def test_polynomial_example():
    assert Kernel(KernelKind.POLYNOMIAL, 0.5)([1.0, 0.0], [2.0, 0.0]) == pytest.approx(8.0)


@pytest.mark.parametrize("kind", list(KernelKind))
def test_formulas_against_scalar_oracle(rng, kind):
    a, b = rng.random(5), rng.random(5)
    g = 0.2
    ref = {
        KernelKind.LINEAR: a @ b,
        KernelKind.POLYNOMIAL: (g * (a @ b) + 1) ** 3,
        KernelKind.RBF: np.exp(-g * np.sum((a - b) ** 2)),
        KernelKind.SIGMOID: np.tanh(g * (a @ b) + 1),
    }[kind]
    assert Kernel(kind, g)(a, b) == pytest.approx(ref, rel=1e-12)


def test_normalize_center_properties(rng):
    X = rng.random((7, 4))
    raw = Kernel(KernelKind.POLYNOMIAL, 0.25).gram(X)
    only_norm = kern.normalize_center(raw, normalize=True, center=False)
    np.testing.assert_allclose(np.diag(only_norm.K), 1.0, atol=1e-14)
    full = kern.normalize_center(raw)
    assert np.max(np.abs(full.K.sum(axis=1))) < 1e-8
    np.testing.assert_allclose(full.K, kern.double_center(only_norm.K), atol=1e-12)
    np.testing.assert_allclose(kern.double_center(full.K), full.K, atol=1e-10)
    np.testing.assert_array_equal(full.K, full.K.T)


def test_three_by_three_worked_example():
    K = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]])
    H = np.eye(3) - 1.0 / 3.0
    got = kern.normalize_center(K, normalize=False).K
    np.testing.assert_allclose(got, H @ K @ H, atol=1e-14)


def test_nonpositive_diagonal_rejected():
    with pytest.raises(kern.InvalidInputError):
        kern.normalize_center(np.array([[0.0, 0.0], [0.0, 1.0]]))


def test_linear_gram_of_centered_blocks(rng):
    X = rng.random((6, 5))
    X -= X.mean(axis=1, keepdims=True)
    np.testing.assert_allclose(Kernel(KernelKind.LINEAR).gram(X), X @ X.T, atol=1e-12)


def test_extract_neighborhood(rng):
    A = rng.random((6, 6))
    K = A + A.T
    kxx, kvec, Kmat = kern.extract_neighborhood(K, 2, [4, 0, 5])
    assert kxx == K[2, 2]
    np.testing.assert_array_equal(kvec, [K[4, 2], K[0, 2], K[5, 2]])
    ref = np.array([[K[a, b] for b in (4, 0, 5)] for a in (4, 0, 5)])
    np.testing.assert_array_equal(Kmat, ref)
    _, kv1, km1 = kern.extract_neighborhood(K, 2, [3])
    assert km1.shape == (1, 1) and km1[0, 0] == K[3, 3] and kv1[0] == K[3, 2]
    with pytest.raises(IndexError):
        kern.extract_neighborhood(K, 2, [6])


@pytest.mark.parametrize("kind", list(KernelKind))
def test_oos_duplicate_reproduces_training_column(rng, kind):
    X = rng.random((9, 4))
    kernel = Kernel(kind, 0.25)
    gram = kern.normalize_center(kernel.gram(X))
    cross = kern.cross_kernel_oos(kernel, X[[5, 2]], X, gram)
    np.testing.assert_allclose(cross.cross[0], gram.K[5], atol=1e-12)
    np.testing.assert_allclose(cross.cross[1], gram.K[2], atol=1e-12)
    np.testing.assert_allclose(cross.self_k, [gram.K[5, 5], gram.K[2, 2]], atol=1e-12)


def test_oos_far_query_rbf_raw_decays(rng):
    X = rng.random((5, 3))
    kernel = Kernel(KernelKind.RBF, 1.0)
    gram = kern.normalize_center(kernel.gram(X), normalize=False, center=False)
    cross = kern.cross_kernel_oos(kernel, np.full((1, 3), 100.0), X, gram)
    assert np.max(cross.cross) < 1e-100


def test_oos_two_train_one_query_formula():
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    z = np.array([[1.0, 1.0]])
    kernel = Kernel(KernelKind.LINEAR)
    gram = kern.normalize_center(kernel.gram(X))
    cross = kern.cross_kernel_oos(kernel, z, X, gram)
    # cosine-normalised: k_n(z, x1) = 1/sqrt(2), k_n(z, x2) = 2/(sqrt(2)*2); training gram = I
    kn = np.array([1 / np.sqrt(2), 1 / np.sqrt(2)])
    colm = np.array([0.5, 0.5])
    grand = 0.5
    np.testing.assert_allclose(cross.cross[0], kn - kn.mean() - colm + grand, atol=1e-14)
    assert cross.self_k[0] == pytest.approx(1 - 2 * kn.mean() + grand)


@given(st.sampled_from(list(KernelKind)), st.integers(3, 12), st.integers(0, 2**32 - 1))
def test_oos_centering_consistent_with_training(kind, n, seed):
    # centring the joint gram of train + duplicates with training statistics
    # must agree with the training gram on the duplicated rows
    rng = np.random.default_rng(seed)
    X = rng.random((n, 4))
    kernel = Kernel(kind, 0.25)
    gram = kern.normalize_center(kernel.gram(X))
    j = int(rng.integers(n))
    cross = kern.cross_kernel_oos(kernel, X[[j]], X, gram)
    np.testing.assert_allclose(cross.cross[0], gram.K[j], atol=1e-10)

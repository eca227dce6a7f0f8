"""Self-checks behind ``ssimm verify``: gradients against finite differences
and the constraint projection against its contract."""

from dataclasses import dataclass

import numpy as np

from . import kernels as kern
from .llise_embed import SparseWeightRow, constraint_residuals, project_constraints, theta, theta_gradient
from .llise_reconstruct import kernel_gradient, kernel_objective, recon_gradient, recon_objective
from .ssim import SsimConstants

FD_STEP = 1e-6
FD_RTOL = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst: float
    limit: float
    count: int

    @property
    def ok(self):
        return bool(self.worst < self.limit)

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        return f"{status}  {self.name}: worst {self.worst:.3e} (limit {self.limit:.0e}, {self.count} cases)"


def central_diff(f, x, h=FD_STEP):
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def rel_err(analytic, numeric):
    scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def _zero_mean(rng, *shape):
    a = rng.standard_normal(shape)
    return a - a.mean(axis=0, keepdims=True)


def random_recon_instance(rng, q=16, k=5):
    x = _zero_mean(rng, q)
    X = _zero_mean(rng, q, k)
    w = rng.standard_normal(k)
    return x, X, w / np.linalg.norm(w)


def random_kernel_instance(rng, q=16, k=5, n=30, kind="rbf"):
    """Neighbourhood pieces cut from a processed gram of random blocks."""
    blocks = rng.random((n, q))
    kernel = kern.Kernel.for_block_length(kind, q)
    gram = kern.normalize_center(kernel.gram(blocks))
    nb = rng.choice(np.arange(1, n), size=k, replace=False)
    kxx, kvec, Kmat = kern.extract_neighborhood(gram, 0, nb)
    w = rng.standard_normal(k)
    return kxx, kvec, Kmat, w / np.linalg.norm(w)


def random_theta_instance(rng, n=None, p=None, k=None):
    n = n or int(rng.integers(6, 21))
    p = p or int(rng.integers(1, 5))
    k = k or int(rng.integers(1, min(6, n - 1) + 1))
    j = int(rng.integers(n))
    others = np.delete(np.arange(n), j)
    row = SparseWeightRow(j, rng.choice(others, size=k, replace=False), rng.standard_normal(k), n)
    return rng.standard_normal((n, p)), row


def check_recon_gradient(seed=0, count=50):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    c = SsimConstants(16).c
    worst = 0.0
    for _ in range(count):
        x, X, w = random_recon_instance(rng)
        num = central_diff(lambda v: recon_objective(v, x, X, c), w)
        worst = max(worst, rel_err(recon_gradient(w, x, X, c), num))
    return CheckResult("reconstruction gradient", worst, FD_RTOL, count)


def check_kernel_gradient(seed=0, count=50):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    c = SsimConstants(16).c
    worst = 0.0
    kinds = list(kern.KernelKind)
    for t in range(count):
        kxx, kvec, Kmat, w = random_kernel_instance(rng, kind=kinds[t % len(kinds)])
        num = central_diff(lambda v: kernel_objective(v, kxx, kvec, Kmat, c), w)
        worst = max(worst, rel_err(kernel_gradient(w, kxx, kvec, Kmat, c), num))
    return CheckResult("kernel reconstruction gradient", worst, FD_RTOL, count)


def check_theta_gradient(seed=0, count=50):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    c = SsimConstants(16).c
    worst = 0.0
    for _ in range(count):
        Y, row = random_theta_instance(rng)
        num = central_diff(lambda Z: theta(Z, row, c), Y)
        worst = max(worst, rel_err(theta_gradient(Y, row, c), num))
    return CheckResult("embedding gradient", worst, FD_RTOL, count)


def check_projection(seed=0, count=100):
    """Worst of the mean, orthogonality and idempotence residuals."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(5, 51))
        p = int(rng.integers(1, min(5, n - 1) + 1))  # centring leaves rank <= n - 1
        V = project_constraints(rng.standard_normal((n, p)) * rng.uniform(0.01, 100))
        mean_res, orth_res = constraint_residuals(V)
        idem = np.linalg.norm(project_constraints(V) - V)
        # idempotence has a 10x tighter limit than the constraints
        worst = max(worst, mean_res, orth_res, 10.0 * idem)
    return CheckResult("constraint projection", worst, 1e-9, count)


def run_all(seed=0):
    return [
        check_recon_gradient(seed),
        check_kernel_gradient(seed),
        check_theta_gradient(seed),
        check_projection(seed),
    ]

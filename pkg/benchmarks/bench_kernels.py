"""Time the numba kernels against the numpy fallback on protocol-sized inputs.

    python3 benchmarks/bench_kernels.py [--problems 2048] [--blocks 16] [--repeat 3]

Sizes follow the desk-scale protocol: q = 16 pixel blocks, k = 10 neighbours,
n = 121 images, p = 4. The first numba call of each kernel compiles it (or
loads the on-disk cache), so every kernel runs once before timing.
"""

import argparse
import time

import numpy as np

from ssimm import _accel, _hot
from ssimm.llise_embed import initial_embedding
from ssimm.ssim import SsimConstants


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def make_inputs(rng, m, blocks, n=121, q=16, k=10, p=4):
    x = rng.standard_normal((m, q))
    X = rng.standard_normal((m, q, k))
    x -= x.mean(1, keepdims=True)
    X -= X.mean(1, keepdims=True)
    nbr = np.stack([
        np.stack([rng.choice(np.delete(np.arange(n), j), k, replace=False) for j in range(n)])
        for _ in range(blocks)
    ])
    wts = rng.standard_normal((blocks, n, k))
    wts /= np.linalg.norm(wts, axis=2, keepdims=True)
    Y0 = np.stack([initial_embedding(n, p, 0, i) for i in range(blocks)])
    return x, X, nbr, wts, Y0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problems", type=int, default=2048, help="reconstruction problems per batch")
    ap.add_argument("--blocks", type=int, default=16, help="embedding problems (block indices)")
    ap.add_argument("--recon-iter", type=int, default=500)
    ap.add_argument("--embed-iter", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    _accel.set_threads(args.threads)

    rng = np.random.default_rng(args.seed)
    x, X, nbr, wts, Y0 = make_inputs(rng, args.problems, args.blocks)
    c = SsimConstants(16).c
    k = X.shape[2]
    w0 = np.full(k, 1 / np.sqrt(k))
    K = np.einsum("pab,pac->pbc", X, X)
    kv = np.einsum("pab,pa->pb", X, x)
    kxx = np.einsum("pa,pa->p", x, x)
    # tol = 0 keeps every problem running for the full iteration budget
    cases = [
        ("sphere ADMM, input", "sphere_admm_input",
         (x, X, c, 0.1, 0.1, 0.0, args.recon_iter, w0, False)),
        ("sphere ADMM, gram", "sphere_admm_gram",
         (kxx, kv, K, c, 0.01, 0.1, 0.0, args.recon_iter, w0, False)),
        ("embedding ADMM", "embed_admm",
         (nbr, wts, Y0, c, 0.01, 0.01, 0.0, args.embed_iter)),
    ]
    print(f"numba {_accel.numba.__version__}, {_accel.numba.get_num_threads()} threads; "
          f"{args.problems} reconstruction problems x {args.recon_iter} iterations, "
          f"{args.blocks} embedding problems x {args.embed_iter} iterations")
    print(f"{'kernel':<22}{'numba s':>10}{'numpy s':>10}{'speedup':>10}")
    for label, name, a in cases:
        fast = getattr(_hot, name + "_nb")
        slow = getattr(_hot, name + "_np")
        fast(*a)  # compile
        t_nb = best_of(lambda: fast(*a), args.repeat)
        t_np = best_of(lambda: slow(*a), args.repeat)
        print(f"{label:<22}{t_nb:>10.3f}{t_np:>10.3f}{t_np / t_nb:>9.1f}x")

    A = rng.standard_normal((121, 4))
    _hot.project_nb(A)
    t_nb = best_of(lambda: [_hot.project_nb(A) for _ in range(2000)], args.repeat)
    t_np = best_of(lambda: [_hot.project_np(A) for _ in range(2000)], args.repeat)
    print(f"{'projection x2000':<22}{t_nb:>10.3f}{t_np:>10.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()

"""Backend selection for the hot numeric kernels.

Every kernel in :mod:`ssimm._hot` exists twice: a numba ``@njit`` version and a
pure-numpy version. The numba path is used when numba imports cleanly and the
environment variable ``SSIMM_DISABLE_NUMBA`` is unset (or ``0``). Set it to
``1`` to force the numpy path, e.g. for debugging or coverage runs.

Thread count for the parallel numba kernels is taken from ``SSIMM_THREADS``
when present, and may be changed later with :func:`set_threads`.
"""

import os

_FALSY = ("", "0", "false", "no", "off")


def _env_disabled():
    return os.environ.get("SSIMM_DISABLE_NUMBA", "").strip().lower() not in _FALSY


try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # try OpenMP before TBB: an outdated TBB only produces a warning
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator.

    Functions decorated while numba is missing stay plain Python, so the
    module still imports and the numpy dispatch path remains usable.
    """
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def set_threads(n):
    """Cap the number of numba worker threads (no-op on the numpy path)."""
    if n is None or not HAVE_NUMBA:
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


if HAVE_NUMBA and os.environ.get("SSIMM_THREADS"):
    set_threads(os.environ["SSIMM_THREADS"])

"""Backend selection for the hot loops.

Kernels are compiled with numba when it is importable and ``WAVESRC_NUMBA``
is not set to ``0``; otherwise the pure-numpy fallbacks in
:mod:`wavesrc.kernels` are used.  ``WAVESRC_THREADS`` caps the numba thread
pool (the CLI ``--threads`` flag sets the same limit).
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("WAVESRC_NUMBA", "1").strip().lower()

try:
    if _FLAG in ("0", "false", "no", "off"):
        raise ImportError("numba disabled by WAVESRC_NUMBA")
    import numba

    # skip the TBB layer, which warns on the older runtime shipped with many distros
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


if HAVE_NUMBA:
    prange = numba.prange
else:
    prange = range


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def set_threads(n: int | None) -> int:
    """Limit worker threads; returns the count in effect (1 for numpy)."""
    if not HAVE_NUMBA:
        return 1
    limit = numba.config.NUMBA_NUM_THREADS
    if n is None:
        env = os.environ.get("WAVESRC_THREADS")
        n = int(env) if env else limit
    n = max(1, min(int(n), limit))
    numba.set_num_threads(n)
    return n


def get_threads() -> int:
    return numba.get_num_threads() if HAVE_NUMBA else 1

"""Numba switch.

Set ``PMGALERKIN_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba
is not importable the numpy path is used regardless.
"""
import os
import warnings

_FLAG = os.environ.get("PMGALERKIN_DISABLE_NUMBA", "").strip().lower()

# the bundled TBB is too old for numba; it silently falls back to OpenMP/workqueue
warnings.filterwarnings("ignore", message="The TBB threading layer")

try:
    import numba
except ImportError:  # pragma: no cover - numba ships with the test env
    numba = None

NUMBA_ENABLED = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is active, identity decorator otherwise."""
    if numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func
    return numba.njit(*args, **kwargs)


if numba is not None:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def set_threads(n):
    """Cap numba worker threads; no-op without numba."""
    if numba is not None and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))

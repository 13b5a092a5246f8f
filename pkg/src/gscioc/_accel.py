"""Optional numba acceleration.

Kernels decorated with :func:`njit` are compiled by numba when it is
importable and ``GSCIOC_DISABLE_NUMBA`` is unset (or ``0``).  Every kernel
has a pure-numpy twin; :data:`USE_NUMBA` tells callers which path is live.
"""
import os

_DISABLED = os.environ.get("GSCIOC_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    import numba as _numba

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # skip the TBB probe, which warns on older system TBB builds
        _numba.config.THREADING_LAYER = "workqueue"
    HAS_NUMBA = True
except ImportError:
    _numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLED
prange = _numba.prange if USE_NUMBA else range


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is active, identity otherwise."""
    if USE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def set_threads(n) -> None:
    """Cap the numba worker pool (no-op without numba)."""
    if USE_NUMBA and n:
        _numba.set_num_threads(max(1, min(int(n), _numba.config.NUMBA_NUM_THREADS)))

"""Numba dispatch.

Kernels are written in the numpy subset numba understands, so the same
source runs compiled or interpreted. Set ``HEMSDR_DISABLE_NUMBA=1`` to force
the interpreted path (debugging, platforms without numba).
"""
import os

_FLAG = os.environ.get("HEMSDR_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_ENABLED = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def maybe_njit(fn):
    """Compile ``fn`` with numba when enabled; always expose ``py_func``."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(fn)
    fn.py_func = fn
    return fn

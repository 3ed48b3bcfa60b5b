"""Numba switch.

Set ``NETDEFRL_DISABLE_NUMBA=1`` before import to force the pure-numpy
kernels even when numba is installed.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_DISABLED = os.environ.get("NETDEFRL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = NUMBA_AVAILABLE and not NUMBA_DISABLED


def njit(func):
    """Compile ``func`` with numba (nopython, cached); identity if numba is missing."""
    if numba is None:
        return func
    return numba.njit(cache=True)(func)

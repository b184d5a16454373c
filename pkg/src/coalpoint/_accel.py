"""Backend selection for the compiled kernels.

Set ``COALPOINT_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
The flag is read once, at import time.
"""
import os

_FLAG = os.environ.get("COALPOINT_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")
BACKEND = "numba" if USE_NUMBA else "python"


def jit(func):
    """Compile ``func`` with numba when enabled, else return it unchanged.

    The uncompiled function stays reachable as ``.py_func`` either way, so the
    benchmark can time both paths from one process.
    """
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    func.py_func = func
    return func

"""Optional numba acceleration.

Hot loops are written once as plain Python and compiled with ``numba.njit``
when numba is importable. Setting ``BOXDYN_NO_NUMBA=1`` in the environment
selects the pure numpy/scipy code paths instead (useful for debugging and
for checking that both paths agree).
"""
import os

_DISABLED = os.environ.get("BOXDYN_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or the identity decorator when numba is off."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"

"""Numba switch.

Batch kernels are compiled with numba when it is importable and not disabled.
Set ``ADDRESSLESS_DISABLE_NUMBA=1`` (or numba's own ``NUMBA_DISABLE_JIT=1``)
to force the pure-numpy path. The choice is made once, at import time.
"""

import os

_FALSY = ("", "0", "false", "no", "off")


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in _FALSY


try:
    if _flag("ADDRESSLESS_DISABLE_NUMBA") or _flag("NUMBA_DISABLE_JIT"):
        raise ImportError("numba disabled by environment")
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(func):
    """Compile ``func`` in nopython mode, or return ``None`` without numba.

    Callers keep the Python original around, so a ``None`` here simply means
    "no compiled variant".
    """
    if not HAVE_NUMBA:
        return None
    return numba.njit(cache=True, nogil=True)(func)


def backend():
    return "numba" if HAVE_NUMBA else "numpy"

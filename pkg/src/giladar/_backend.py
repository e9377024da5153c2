"""Selects the compiled (numba) or pure-numpy kernel path.

Set ``GILADAR_DISABLE_NUMBA=1`` to force the numpy path, e.g. on platforms
without numba or when debugging a kernel.
"""

import os

_FALSY = ("", "0", "false", "no", "off")

DISABLE_NUMBA = os.environ.get("GILADAR_DISABLE_NUMBA", "").strip().lower() not in _FALSY

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise the identity decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"

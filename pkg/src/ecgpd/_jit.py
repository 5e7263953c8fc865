"""Numba switch for the hot kernels.

Set ``ECGPD_NUMBA=0`` to run every kernel through its pure-numpy path
instead of the compiled one. The flag is read once at import time.
"""
import os

_OFF = {"0", "false", "no", "off"}

USE_NUMBA = os.environ.get("ECGPD_NUMBA", "1").strip().lower() not in _OFF

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"

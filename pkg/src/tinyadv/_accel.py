"""Optional numba acceleration.

Set ``TINYADV_NUMBA=0`` in the environment to force the pure-numpy kernels.
The flag is read once at import time.
"""
import os

_flag = os.environ.get("TINYADV_NUMBA", "1").strip().lower()

try:
    if _flag in ("0", "false", "no", "off"):
        raise ImportError("numba disabled by TINYADV_NUMBA")
    from numba import njit as _njit

    USE_NUMBA = True

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)

except ImportError:
    USE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

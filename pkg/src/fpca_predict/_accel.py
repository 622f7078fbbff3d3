"""Backend switch for the compiled kernels.

Set ``FPCA_PREDICT_DISABLE_NUMBA=1`` before import to force the pure-numpy
code path. The flag is read once; tests flip it through :func:`use_numba`.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

_ENV_FLAG = "FPCA_PREDICT_DISABLE_NUMBA"
_enabled = HAS_NUMBA and os.environ.get(_ENV_FLAG, "").lower() not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def wrap(func):
        return func

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


def numba_enabled() -> bool:
    return _enabled


def use_numba(flag: bool) -> bool:
    """Select the backend at runtime; returns the previous setting."""
    global _enabled
    previous = _enabled
    _enabled = bool(flag) and HAS_NUMBA
    return previous

"""Numba switch for the hot kernels.

Every kernel in the package is decorated with :func:`njit` from this module.
When numba is importable and ``CSSPA_NO_JIT`` is unset (or ``0``), the
decorator compiles in nopython mode.  Otherwise it returns the function
untouched and the same source runs as plain numpy code.  The flag is read
once, at import time.
"""
import os

_DISABLED_VALUES = ("1", "true", "yes", "on")

JIT_REQUESTED = os.environ.get("CSSPA_NO_JIT", "0").strip().lower() not in _DISABLED_VALUES

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

JIT_ENABLED = JIT_REQUESTED and _numba is not None


def njit(fn=None, **options):
    """``numba.njit`` when enabled, identity otherwise.

    Usable bare (``@njit``) or with options (``@njit(cache=True)``).
    """
    if not JIT_ENABLED:
        return fn if fn is not None else (lambda f: f)
    options.setdefault("nogil", True)
    if fn is None:
        return _numba.njit(**options)
    return _numba.njit(**options)(fn)

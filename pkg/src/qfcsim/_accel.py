"""Numba selection.

Hot kernels are compiled with numba when it is importable and the
environment variable ``QFCSIM_DISABLE_NUMBA`` is unset (or ``0``).
Otherwise every kernel runs through its pure-numpy twin.
"""
import os

_flag = os.environ.get("QFCSIM_DISABLE_NUMBA", "0").strip().lower()
DISABLED_BY_ENV = _flag not in ("", "0", "false", "no")

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and not DISABLED_BY_ENV


def njit(f):
    """Compile ``f`` in nopython mode when numba is importable, else return it."""
    if not NUMBA_AVAILABLE:
        return f
    return numba.njit(cache=True, nogil=True)(f)

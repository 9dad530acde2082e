"""Backend switch for the hot kernels.

Set ``BBGKY_QEM_BACKEND=numpy`` (or ``BBGKY_QEM_DISABLE_NUMBA=1``) before
import to run the pure-numpy kernels; otherwise numba is used when importable.
"""
from __future__ import annotations

import os

_requested = os.environ.get("BBGKY_QEM_BACKEND", "numba").strip().lower()
if os.environ.get("BBGKY_QEM_DISABLE_NUMBA", "").strip() not in ("", "0"):
    _requested = "numpy"

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAS_NUMBA = _numba is not None
USE_NUMBA = HAS_NUMBA and _requested != "numpy"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when available, else a no-op decorator."""
    if HAS_NUMBA:
        return _numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f

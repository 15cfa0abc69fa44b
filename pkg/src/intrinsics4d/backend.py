"""Kernel backend selection.

Hot inner loops (field evaluation, rasterization, isosurface extraction)
exist twice: a numba ``@njit`` kernel and a vectorized pure-numpy fallback.
The active backend is chosen once at import time from the environment
variable ``INTRINSICS4D_BACKEND``:

    auto   - numba when importable, numpy otherwise (default)
    numba  - require numba, raise if missing
    numpy  - force the pure-numpy path

``benchmarks/bench_kernels.py`` times both paths side by side.
"""

from __future__ import annotations

import os

_MODE = os.environ.get("INTRINSICS4D_BACKEND", "auto").strip().lower()
if _MODE not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"INTRINSICS4D_BACKEND must be auto|numba|numpy, got {_MODE!r}"
    )

try:
    import numba as _numba

    HAVE_NUMBA = True
except ImportError:
    _numba = None
    HAVE_NUMBA = False

if _MODE == "numba" and not HAVE_NUMBA:
    raise ImportError("INTRINSICS4D_BACKEND=numba but numba is not installed")

USE_NUMBA = HAVE_NUMBA and _MODE != "numpy"


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise.

    Kernels decorated with this are only *called* on the numba path, but the
    decorator must not explode at import time on numpy-only installs.
    """
    if HAVE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def wrap(fn):
        return fn

    return wrap

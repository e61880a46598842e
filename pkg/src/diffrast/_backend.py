"""Kernel backend selection.

The hot per-pixel loops exist twice: a numba @njit build and a pure-numpy
build.  ``DIFFRAST_BACKEND`` picks one at import time:

  DIFFRAST_BACKEND=numba   force the jitted kernels (error if numba missing)
  DIFFRAST_BACKEND=numpy   force the vectorized numpy fallback
  unset / auto             numba when importable, else numpy

Both builds implement the same contracts and are cross-checked by the test
suite; ``bench/backend_bench.py`` compares their throughput.
"""

import os


def _resolve():
    choice = os.environ.get("DIFFRAST_BACKEND", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"DIFFRAST_BACKEND must be auto|numba|numpy, got {choice!r}")
    if choice in ("auto", "numba"):
        try:
            from . import _kernels_numba as k
            return "numba", k
        except ImportError:
            if choice == "numba":
                raise
    from . import _kernels_numpy as k
    return "numpy", k


BACKEND_NAME, kernels = _resolve()


def active_backend() -> str:
    return BACKEND_NAME

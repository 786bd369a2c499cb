"""Kernel backend selection: compiled extension if importable, numpy fallback.

Set SRPC_PURE_PYTHON=1 to force the fallback (used by the benchmark and the
backend-equivalence tests).
"""

import os

from . import _kernels_py

if os.environ.get("SRPC_PURE_PYTHON"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built; identical pure path
        kernels = _kernels_py


def backend_name():
    return kernels.BACKEND

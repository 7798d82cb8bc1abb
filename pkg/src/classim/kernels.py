"""Backend selection for the hot kernels.

The compiled extension is used when it imports; setting the environment
variable ``CLASSIM_PURE_PYTHON=1`` forces the pure-Python fallback.
"""
import os

from classim import _pykernels as python_backend

try:
    if os.environ.get("CLASSIM_PURE_PYTHON"):
        raise ImportError("pure-Python backend requested")
    from classim import _kernels as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = python_backend
    BACKEND = "python"

try:
    from classim import _kernels as compiled_backend
except ImportError:
    compiled_backend = None

jacobi_eigh = _impl.jacobi_eigh
max_lambda_signs = _impl.max_lambda_signs
restricted_growth_strings = _impl.restricted_growth_strings

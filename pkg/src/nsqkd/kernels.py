"""Backend selection for the hot kernels.

The compiled extension is used when it imports; setting ``NSQKD_PURE_PYTHON=1``
forces the numpy fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("NSQKD_PURE_PYTHON"):
        raise ImportError("pure-Python kernels requested")
    from . import _kernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

toeplitz_hash = _impl.toeplitz_hash
csr_syndrome = _impl.csr_syndrome
bp_decode = _impl.bp_decode

fallback = _kernels_py

__all__ = ["BACKEND", "toeplitz_hash", "csr_syndrome", "bp_decode", "fallback"]

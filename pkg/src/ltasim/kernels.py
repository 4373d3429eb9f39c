"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; otherwise the
NumPy fallback is used. Set LTASIM_PURE=1 before import to force the
fallback (useful for benchmarking and for testing both paths).
"""
from __future__ import annotations

import os

from ltasim import _kernels_py

if os.environ.get("LTASIM_PURE"):
    _impl = _kernels_py
else:
    try:
        from ltasim import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
spectral_accumulate = _impl.spectral_accumulate
reconstruct = _impl.reconstruct
value_iteration = _impl.value_iteration

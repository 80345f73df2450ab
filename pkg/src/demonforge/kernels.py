"""Kernel backend selection.

The compiled extension is preferred; set ``DEMONFORGE_PURE_PYTHON=1`` to force
the numpy fallback (both expose the same functions).
"""
import os

if os.environ.get("DEMONFORGE_PURE_PYTHON"):
    from . import _pykernels as _impl
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as _impl
        BACKEND = "python"

eigvalsh = _impl.eigvalsh
eigh = _impl.eigh
entropy = _impl.entropy
xlogx_entropy = _impl.xlogx_entropy
ptrace = _impl.ptrace

__all__ = ["BACKEND", "eigvalsh", "eigh", "entropy", "xlogx_entropy", "ptrace"]

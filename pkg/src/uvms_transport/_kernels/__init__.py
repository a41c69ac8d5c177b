"""Kernel backend selection.

The compiled extension is used when importable. Setting the environment
variable ``UVMS_TRANSPORT_BACKEND=python`` forces the numpy fallback.
"""
import os

from . import _pykernels

python_backend = _pykernels

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None


def select(name=None):
    """Return a backend module by name ("cython", "python") or the default."""
    name = name or os.environ.get("UVMS_TRANSPORT_BACKEND", "").lower() or None
    if name == "python":
        return python_backend
    if name in ("cython", "compiled"):
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built")
        return compiled_backend
    return compiled_backend if compiled_backend is not None else python_backend


backend = select()
BACKEND_NAME = backend.NAME

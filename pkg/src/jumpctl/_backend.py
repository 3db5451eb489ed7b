"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``JUMPCTL_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernels_py

kernels = _kernels_py
name = "python"

if os.environ.get("JUMPCTL_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        name = "cython"


def use(backend):
    """Switch the active backend ("cython" or "python"); returns the previous name."""
    global kernels, name
    prev = name
    if backend == "python":
        kernels, name = _kernels_py, "python"
    elif backend == "cython":
        from . import _kernels as _compiled
        kernels, name = _compiled, "cython"
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return prev

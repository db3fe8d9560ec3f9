"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``UMEIT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("UMEIT_PURE_PYTHON") != "1":
    try:
        from . import _kernels_ext

        kernels = _kernels_ext
        BACKEND = "cython"
    except ImportError:
        pass


def use(name):
    """Switch the active kernel module ("cython" or "python") at runtime."""
    global kernels, BACKEND
    if name == "python":
        kernels, BACKEND = _kernels_py, "python"
    elif name == "cython":
        from . import _kernels_ext

        kernels, BACKEND = _kernels_ext, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")
    return BACKEND

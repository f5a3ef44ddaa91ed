"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``DBQ_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np

from . import _kernels_py

GRAD_NONE = _kernels_py.GRAD_NONE
GRAD_FROZEN = _kernels_py.GRAD_FROZEN
GRAD_TRACKED = _kernels_py.GRAD_TRACKED

_compiled = None
if not os.environ.get("DBQ_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ("cython", "numpy" or None for default)."""
    if name is None:
        name = BACKEND
    if name == "numpy":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    return ["numpy"] + (["cython"] if _compiled is not None else [])


def block_stats(Wt, block_size: int, backend: str | None = None):
    Wt = np.ascontiguousarray(Wt, dtype=np.float64)
    return get_backend(backend).block_stats(Wt, int(block_size))


def dual_target(W, T, block_size: int, floor: float, l2: bool = False,
                grad_mode: int = GRAD_NONE, backend: str | None = None):
    W = np.ascontiguousarray(W, dtype=np.float64)
    T = np.ascontiguousarray(T, dtype=np.float64)
    return get_backend(backend).dual_target(W, T, int(block_size), float(floor), bool(l2), int(grad_mode))

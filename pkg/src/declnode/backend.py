"""Selection between the compiled kernel core and the NumPy fallback.

The compiled extension is preferred when it imported successfully; set
``DECLNODE_BACKEND=python`` to force the fallback or ``=ext`` to require
the extension (raising if it is unavailable).  Both backends obey the same
buffer contracts, so results agree to floating-point reassociation error
and workspace accounting is identical.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

from . import _kernels_py

FAMILY_IDS = {
    "quadratic": _kernels_py.QUADRATIC,
    "pseudo-huber": _kernels_py.PSEUDO_HUBER,
    "huber": _kernels_py.HUBER,
    "welsch": _kernels_py.WELSCH,
    "trunc-quad": _kernels_py.TRUNC_QUAD,
}

_requested = os.environ.get("DECLNODE_BACKEND", "auto").lower()
if _requested not in ("auto", "ext", "python"):
    raise ValueError(
        f"DECLNODE_BACKEND must be auto, ext, or python, got {_requested!r}"
    )

_impl = _kernels_py
_name = "python"
if _requested in ("auto", "ext"):
    try:
        from . import _kernels_c

        _impl = _kernels_c
        _name = "ext"
    except ImportError:
        if _requested == "ext":
            raise ImportError(
                "DECLNODE_BACKEND=ext but the compiled kernel core is not "
                "built; reinstall the package or use DECLNODE_BACKEND=python"
            ) from None


def active_backend() -> str:
    """Name of the backend in use: ``"ext"`` or ``"python"``."""
    return _name


def kernels(dtype=np.float64):
    """Kernel namespace for the given dtype.

    The compiled core only handles float64; other dtypes (float32 in
    benchmark mode) always go through the NumPy fallback.
    """
    if _impl is not _kernels_py and np.dtype(dtype) != np.float64:
        return _kernels_py
    return _impl


@contextmanager
def use_backend(name: str):
    """Temporarily force a backend by name ("ext" or "python").

    Used by tests and the benchmark CLI; not thread-safe.
    """
    global _impl, _name
    if name == "python":
        new_impl = _kernels_py
    elif name == "ext":
        from . import _kernels_c as new_impl  # raises if unavailable
    elif name == "auto":
        yield
        return
    else:
        raise ValueError(f"unknown backend {name!r}")
    old_impl, old_name = _impl, _name
    _impl, _name = new_impl, name
    try:
        yield
    finally:
        _impl, _name = old_impl, old_name

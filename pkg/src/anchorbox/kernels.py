"""Kernel backend selection.

The compiled extension is used when it imports; otherwise (or when
``ANCHORBOX_PURE=1`` is set) the numpy implementations are used.  Callers
must pass C-contiguous float64 point arrays and intp index arrays.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("ANCHORBOX_PURE"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

filter_closed = _impl.filter_closed
filter_open = _impl.filter_open
nearest_index = _impl.nearest_index
expand_box = _impl.expand_box
forest_apply = _impl.forest_apply


def backend(name):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name == "python":
        return _kernels_py
    from . import _kernels

    return _kernels

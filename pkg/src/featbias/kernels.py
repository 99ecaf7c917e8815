"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when
``FEATBIAS_KERNELS=python`` is set, the pure-Python twin is used. Both expose
``build_forest``, ``predict_trees``, ``perm_importance`` and ``cd_path``.
"""
import os

from . import _pykernels

if os.environ.get("FEATBIAS_KERNELS", "").lower() == "python":
    _impl = _pykernels
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "compiled"

build_forest = _impl.build_forest
predict_trees = _impl.predict_trees
perm_importance = _impl.perm_importance
cd_path = _impl.cd_path


def get_backend(name):
    """Return the kernel module called ``name`` ('compiled' or 'python')."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")

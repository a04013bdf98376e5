"""Backend selection for the hot element kernels.

The compiled Cython kernel is used when it has been built; otherwise, or when
``QGEFEM_PURE_PYTHON`` is set to a non-empty value, the numpy version is used.
"""
import os

from . import _kernels_py

if os.environ.get("QGEFEM_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
assemble_quadratic = (_compiled or _kernels_py).assemble_quadratic
python_assemble_quadratic = _kernels_py.assemble_quadratic

"""Hot inner loops, compiled when possible.

The compiled extension ``patternlocal._kernels`` is used if it imports;
otherwise the numpy implementations in ``_kernels_py`` are used.  Setting the
environment variable ``PATTERNLOCAL_PURE=1`` forces the fallback.
``BACKEND`` names the active implementation.
"""
import os

from . import _kernels_py as python

compiled = None
if not os.environ.get("PATTERNLOCAL_PURE"):
    try:
        from . import _kernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else python
BACKEND = "compiled" if compiled is not None else "python"

transport_simplex = _impl.transport_simplex
lasso_cd_gram = _impl.lasso_cd_gram
slic_assign = _impl.slic_assign
MASS_SCALE = python.MASS_SCALE

__all__ = [
    "BACKEND",
    "MASS_SCALE",
    "compiled",
    "lasso_cd_gram",
    "python",
    "slic_assign",
    "transport_simplex",
]

"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``VQT_PURE_PYTHON=1`` before import to force the numpy path.
"""

import os

from vqt import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("VQT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from vqt import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

wigner_grid = _impl.wigner_grid
ecd_apply = _impl.ecd_apply
qubit_apply = _impl.qubit_apply

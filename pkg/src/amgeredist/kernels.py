"""Kernel backend selection.

The compiled Cython extension is used when it was built; otherwise the numpy
fallback is imported. Set ``AMGEREDIST_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("AMGEREDIST_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

bool_spgemm = _impl.bool_spgemm
num_spgemm = _impl.num_spgemm
bfs_distance = _impl.bfs_distance
grow_regions = _impl.grow_regions

__all__ = ["BACKEND", "bool_spgemm", "num_spgemm", "bfs_distance", "grow_regions"]

"""Kernel backend selection.

The compiled extension is preferred; set ``CZFLOW_PURE_PYTHON=1`` to force
the numpy fallback.
"""
import os

from . import _kernels_py

if os.environ.get("CZFLOW_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _kernels_py
        BACKEND = "python"

koranyi_argmin = _impl.koranyi_argmin
greedy_koranyi_net = _impl.greedy_koranyi_net
pl_interval_max = _impl.pl_interval_max
koranyi_cell_radii = _impl.koranyi_cell_radii

__all__ = [
    "BACKEND",
    "koranyi_argmin",
    "greedy_koranyi_net",
    "pl_interval_max",
    "koranyi_cell_radii",
]

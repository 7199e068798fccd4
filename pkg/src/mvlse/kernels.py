"""Kernel backend selection.

The compiled extension is used when it imports; set
``MVLSE_PURE_PYTHON=1`` to force the numpy fallback. ``BACKEND`` names the
active choice.
"""
import os

from . import _kernels_py

if os.environ.get("MVLSE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

em_example = _impl.em_example

__all__ = ["em_example", "BACKEND"]

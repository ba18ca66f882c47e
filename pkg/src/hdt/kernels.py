"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports; otherwise the numpy
fallback in ``_core_py``. Setting ``HDT_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _core_py

if os.environ.get("HDT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _core_py
        BACKEND = "python"

fft_pow2 = _impl.fft_pow2
moving_average = _impl.moving_average
moving_average_adjoint = _impl.moving_average_adjoint

__all__ = ["BACKEND", "fft_pow2", "moving_average", "moving_average_adjoint"]

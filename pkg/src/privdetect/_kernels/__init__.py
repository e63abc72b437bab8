"""LSTM direction kernels, compiled when available.

The Cython extension is used if it was built; otherwise the numpy
implementation is used. Setting ``PRIVDETECT_PURE_PYTHON=1`` forces the
fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import lstm_py

if os.environ.get("PRIVDETECT_PURE_PYTHON", "") not in ("", "0"):
    _impl = lstm_py
    BACKEND = "python"
else:
    try:
        from . import lstm_cy as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = lstm_py
        BACKEND = "python"

lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward

__all__ = ["BACKEND", "lstm_forward", "lstm_backward", "lstm_py"]

"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy versions
in ``_purepy`` are used.  Setting ``PARALAB_BACKEND=python`` forces the
fallback.
"""

from __future__ import annotations

import os

from paralab import _purepy

BACKEND = "python"
if os.environ.get("PARALAB_BACKEND", "").lower() != "python":
    try:
        from paralab import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _purepy
else:
    _impl = _purepy

holder_ratio_max = _impl.holder_ratio_max
interp_periodic = _impl.interp_periodic

__all__ = ["BACKEND", "holder_ratio_max", "interp_periodic"]

"""Backend selection for the numeric inner loops.

The compiled extension is used when it was built; set ``AUTOCORRNET_PURE=1``
to force the NumPy fallback (the benchmark and the equivalence tests do).
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("AUTOCORRNET_PURE") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

ar1_filter = _impl.ar1_filter
lag_sums = _impl.lag_sums
adam_update = _impl.adam_update

__all__ = ["BACKEND", "ar1_filter", "lag_sums", "adam_update"]

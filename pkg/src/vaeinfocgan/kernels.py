"""Backend selection for the raster kernels.

The compiled extension is used when it imports; set
``VAEINFOCGAN_PURE_PYTHON=1`` to force the Python fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
bin_points = _pykernels.bin_points
trace_segments = _pykernels.trace_segments

if os.environ.get("VAEINFOCGAN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:  # extension not built
        _ckernels = None
    else:
        BACKEND = "cython"
        bin_points = _ckernels.bin_points
        trace_segments = _ckernels.trace_segments

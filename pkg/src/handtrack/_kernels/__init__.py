"""JIT-compiled hot loops with vectorized NumPy fallbacks.

Set HANDTRACK_PURE_NUMPY=1 to force the NumPy path (used for debugging and
by the kernel benchmark).  Each public function dispatches at import time.
"""

import os

PURE_NUMPY = os.environ.get("HANDTRACK_PURE_NUMPY", "0") not in ("", "0")

if not PURE_NUMPY:
    try:
        from numba import njit  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not PURE_NUMPY

from .raster import rasterize_depth  # noqa: E402,F401
from .bilateral import bilateral_filter  # noqa: E402,F401
from .tritri import tri_tri_intersections  # noqa: E402,F401

"""Hot numeric kernels with two interchangeable backends.

The numba backend is the default; set ``GAZECHAIR_KERNELS=numpy`` to force
the pure-numpy path (it is also the automatic fallback when numba is not
importable). ``python -m gazechair.kernels.bench`` times both.
"""

import os

_requested = os.environ.get("GAZECHAIR_KERNELS", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"GAZECHAIR_KERNELS must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    from . import numpy_impl as _impl

    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import numpy_impl as _impl

        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
lbp_codes = _impl.lbp_codes
zncc_sliding = _impl.zncc_sliding

__all__ = [
    "BACKEND",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool_forward",
    "maxpool_backward",
    "lbp_codes",
    "zncc_sliding",
]

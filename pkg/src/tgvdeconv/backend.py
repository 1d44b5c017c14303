"""Select the compute backend for the hot kernels.

The compiled extension is preferred when it built; the pure-numpy module is
the fallback.  ``TGVDECONV_BACKEND=numpy`` forces the fallback (useful for
benchmarking and debugging).
"""

import os

if os.environ.get("TGVDECONV_BACKEND", "").strip().lower() == "numpy":
    from . import _kernels_np as _impl
else:
    try:
        from . import _kernels_c as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_np as _impl  # type: ignore[no-redef]

BACKEND_NAME = _impl.NAME

conv_same = _impl.conv_same
conv_same_grad_u = _impl.conv_same_grad_u
conv_same_grad_k = _impl.conv_same_grad_k
im2col3 = _impl.im2col3
col2im3 = _impl.col2im3

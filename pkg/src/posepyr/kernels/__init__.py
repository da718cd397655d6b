"""Backend selection for the hot convolution kernels.

POSEPYR_BACKEND=numpy forces the pure-numpy path; POSEPYR_BACKEND=numba
requires numba. Default: numba when importable, numpy otherwise.
POSEPYR_THREADS caps numba's thread pool.
"""

import os

_requested = os.environ.get("POSEPYR_BACKEND", "auto").lower()
if _requested not in ("auto", "numpy", "numba"):
    raise ValueError(f"POSEPYR_BACKEND must be 'numpy' or 'numba', got {_requested!r}")

if _requested == "numpy":
    from . import numpy_backend as _impl
    BACKEND = "numpy"
else:
    try:
        import numba

        threads = os.environ.get("POSEPYR_THREADS")
        if threads:
            numba.set_num_threads(max(1, int(threads)))
        from . import numba_backend as _impl
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import numpy_backend as _impl
        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_input_grad = _impl.conv2d_input_grad
conv2d_weight_grad = _impl.conv2d_weight_grad

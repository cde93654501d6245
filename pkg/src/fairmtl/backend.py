"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used.  `FAIRMTL_KERNELS=numpy` forces the fallback and
`FAIRMTL_KERNELS=compiled` makes a missing extension a hard error (useful
in benchmarks and CI).
"""

import os

_requested = os.environ.get("FAIRMTL_KERNELS", "auto")

if _requested not in ("auto", "compiled", "numpy"):
    raise ValueError(f"FAIRMTL_KERNELS must be auto/compiled/numpy, got {_requested!r}")

if _requested in ("auto", "compiled"):
    try:
        from . import _ckernels as kernels
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import _kernels_np as kernels
        BACKEND = "numpy"
else:
    from . import _kernels_np as kernels
    BACKEND = "numpy"

"""Backend selection for the hot inner loops.

The Cython extension ``augmentlab._kernels`` is used when it has been built;
otherwise, or when the environment variable ``AUGMENTLAB_PURE_PYTHON`` is set
to a true value, the numpy implementation in ``augmentlab._kernels_py`` is
used. ``BACKEND`` records which one is active.
"""

import os

from . import _kernels_py

if os.environ.get("AUGMENTLAB_PURE_PYTHON", "").lower() in ("1", "true", "yes"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

affine_warp = _impl.affine_warp
jacobi_svd_tall = _impl.jacobi_svd_tall

__all__ = ["BACKEND", "affine_warp", "jacobi_svd_tall"]

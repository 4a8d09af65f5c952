"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Set ``GLOCAL_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("GLOCAL_BACKEND", "").lower() in ("python", "py", "numpy"):
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels

        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _pykernels
        BACKEND = "python"

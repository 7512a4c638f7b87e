"""Pick the compiled particle kernels when built, else the numpy versions.

Set ``CCSLAB_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if not os.environ.get("CCSLAB_PURE_PYTHON"):
    try:
        from . import _ckernels as kernels  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out

"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when
``SAMPDESIGN_PURE_PYTHON`` is set to a non-empty value, the pure-Python
kernels are used. Both expose the same functions with identical results.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and not os.environ.get("SAMPDESIGN_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"

impl = BACKENDS[BACKEND]


def get(name=None):
    """Return the kernel module ``name`` (default: the active backend)."""
    if name is None:
        return impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None

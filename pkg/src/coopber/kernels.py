"""Backend selection for the Monte Carlo kernels.

The compiled extension is used when it imported cleanly; otherwise, or when
``COOPBER_PURE_PYTHON=1`` is set, the numpy fallback takes over. Both consume
the same pre-drawn bits, exponentials and normals, so decisions agree up to the
rare floating-point tie.
"""

import os

from . import _pykernels

CANONICAL_LINKS = 3

_force_py = os.environ.get("COOPBER_PURE_PYTHON", "") not in ("", "0")
try:
    if _force_py:
        raise ImportError
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "numpy"

canonical_block = _impl.canonical_block
netcode_block = _impl.netcode_block


def backend_module(name: str):
    """Return a backend by name ('cython' or 'numpy'); raises if unavailable."""
    if name == "numpy":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")

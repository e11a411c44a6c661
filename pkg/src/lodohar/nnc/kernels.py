"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
versions are used. Set ``LODOHAR_KERNELS=python`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("LODOHAR_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward

__all__ = [
    "BACKEND",
    "conv1d_forward",
    "conv1d_backward",
    "maxpool2_forward",
    "maxpool2_backward",
]

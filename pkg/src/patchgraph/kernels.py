"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementations in ``_pykernels`` are used. Set ``PATCHGRAPH_PURE=1``
to force the fallback.
"""
import os

from . import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["cython"] = _ckernels

if os.environ.get("PATCHGRAPH_PURE") or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

_impl = BACKENDS[BACKEND]

xoshiro_fill = _impl.xoshiro_fill
segment_sum = _impl.segment_sum
segment_softmax = _impl.segment_softmax
segment_softmax_grad = _impl.segment_softmax_grad
confusion_matrix = _impl.confusion_matrix
auroc_binary = _impl.auroc_binary

__all__ = [
    "BACKEND",
    "BACKENDS",
    "xoshiro_fill",
    "segment_sum",
    "segment_softmax",
    "segment_softmax_grad",
    "confusion_matrix",
    "auroc_binary",
]

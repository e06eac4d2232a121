"""Numeric kernel layer with a compiled core and a pure-Python fallback.

The compiled extension (`_native`, Cython) is preferred when importable;
otherwise `_fallback` is used. Set ``VIDSENTRY_PURE_PYTHON=1`` to force the
fallback. Both backends expose the same four functions and agree to within
summation rounding error (see tests/test_kernels.py and
benchmarks/bench_kernels.py).

Callers pass plain sequences; array conversion happens here so the two
backends stay call-compatible.
"""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np

from . import _fallback

if os.environ.get("VIDSENTRY_PURE_PYTHON"):
    _impl = _fallback
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _fallback

BACKEND: str = _impl.BACKEND

_NATIVE = BACKEND == "native"
_EMPTY_BOXES = np.empty((0, 4), dtype=np.float64)


def box_iou_xyxy(ax0: float, ay0: float, ax1: float, ay1: float,
                 bx0: float, by0: float, bx1: float, by1: float) -> float:
    return _impl.box_iou(ax0, ay0, ax1, ay1, bx0, by0, bx1, by1)


def _as_boxes(boxes: Sequence[Sequence[float]]) -> np.ndarray:
    arr = np.asarray(boxes, dtype=np.float64)
    if arr.size == 0:
        return _EMPTY_BOXES
    return arr.reshape(-1, 4)


def max_iou_sum(gt_boxes: Sequence[Sequence[float]], pred_boxes: Sequence[Sequence[float]]) -> float:
    if _NATIVE:
        return _impl.max_iou_sum(_as_boxes(gt_boxes), _as_boxes(pred_boxes))
    return _impl.max_iou_sum(gt_boxes, pred_boxes)


def kl_terms_sum(rhos: Sequence[float]) -> float:
    if _NATIVE:
        return _impl.kl_terms_sum(np.asarray(rhos, dtype=np.float64))
    return _impl.kl_terms_sum(rhos)


def clip_surrogate_sum(ratios: Sequence[float], advantage: float, eps: float) -> float:
    if _NATIVE:
        return _impl.clip_surrogate_sum(np.asarray(ratios, dtype=np.float64), advantage, eps)
    return _impl.clip_surrogate_sum(ratios, advantage, eps)

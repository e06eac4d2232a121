"""Pure-Python kernel implementations.

Mirrors `_native.pyx` exactly. Inner sums use `math.fsum`, which is
correctly rounded and therefore independent of summation order.
"""

from __future__ import annotations

import math
from typing import Sequence

BACKEND = "fallback"


def box_iou(
    ax0: float, ay0: float, ax1: float, ay1: float,
    bx0: float, by0: float, bx1: float, by1: float,
) -> float:
    """Continuous-area intersection-over-union of two xyxy rectangles."""
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def max_iou_sum(gt_boxes: Sequence[Sequence[float]], pred_boxes: Sequence[Sequence[float]]) -> float:
    """Sum over reference boxes of the best IoU against any candidate box.

    A reference box with no candidates contributes 0.
    """
    total = []
    for g in gt_boxes:
        best = 0.0
        for p in pred_boxes:
            iou = box_iou(g[0], g[1], g[2], g[3], p[0], p[1], p[2], p[3])
            if iou > best:
                best = iou
        total.append(best)
    return math.fsum(total)


def kl_terms_sum(rhos: Sequence[float]) -> float:
    """Sum of the per-token divergence terms ``rho - log(rho) - 1``."""
    return math.fsum(r - math.log(r) - 1.0 for r in rhos)


def clip_surrogate_sum(ratios: Sequence[float], advantage: float, eps: float) -> float:
    """Sum of per-token clipped surrogate terms.

    Each term is ``min(r * A, clip(r, 1-eps, 1+eps) * A)``.
    """
    lo = 1.0 - eps
    hi = 1.0 + eps
    terms = []
    for r in ratios:
        clipped = lo if r < lo else (hi if r > hi else r)
        a = r * advantage
        b = clipped * advantage
        terms.append(a if a < b else b)
    return math.fsum(terms)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Native kernel implementations (Cython twin of `_fallback.py`).

Inner sums are Kahan-compensated so results stay stable under
summation-order permutations.
"""

from libc.math cimport log

BACKEND = "native"


cdef inline double _iou(double ax0, double ay0, double ax1, double ay1,
                        double bx0, double by0, double bx1, double by1) nogil:
    cdef double iw = (ax1 if ax1 < bx1 else bx1) - (ax0 if ax0 > bx0 else bx0)
    cdef double ih = (ay1 if ay1 < by1 else by1) - (ay0 if ay0 > by0 else by0)
    cdef double inter, union_
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union_ = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union_


def box_iou(double ax0, double ay0, double ax1, double ay1,
            double bx0, double by0, double bx1, double by1):
    """Continuous-area intersection-over-union of two xyxy rectangles."""
    return _iou(ax0, ay0, ax1, ay1, bx0, by0, bx1, by1)


def max_iou_sum(double[:, :] gt_boxes, double[:, :] pred_boxes):
    """Sum over reference boxes of the best IoU against any candidate box."""
    cdef Py_ssize_t i, j
    cdef Py_ssize_t m = gt_boxes.shape[0]
    cdef Py_ssize_t p = pred_boxes.shape[0]
    cdef double best, iou
    cdef double total = 0.0, comp = 0.0, y, t
    for i in range(m):
        best = 0.0
        for j in range(p):
            iou = _iou(gt_boxes[i, 0], gt_boxes[i, 1], gt_boxes[i, 2], gt_boxes[i, 3],
                       pred_boxes[j, 0], pred_boxes[j, 1], pred_boxes[j, 2], pred_boxes[j, 3])
            if iou > best:
                best = iou
        y = best - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def kl_terms_sum(double[:] rhos):
    """Kahan-compensated sum of ``rho - log(rho) - 1`` terms."""
    cdef Py_ssize_t i
    cdef Py_ssize_t n = rhos.shape[0]
    cdef double total = 0.0, comp = 0.0, y, t
    for i in range(n):
        y = (rhos[i] - log(rhos[i]) - 1.0) - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def clip_surrogate_sum(double[:] ratios, double advantage, double eps):
    """Kahan-compensated sum of ``min(r * A, clip(r, 1-eps, 1+eps) * A)``."""
    cdef Py_ssize_t i
    cdef Py_ssize_t n = ratios.shape[0]
    cdef double lo = 1.0 - eps
    cdef double hi = 1.0 + eps
    cdef double r, clipped, a, b, term
    cdef double total = 0.0, comp = 0.0, y, t
    for i in range(n):
        r = ratios[i]
        clipped = lo if r < lo else (hi if r > hi else r)
        a = r * advantage
        b = clipped * advantage
        term = a if a < b else b
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total

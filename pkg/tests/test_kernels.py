from __future__ import annotations

import math
import random

import pytest

from vidsentry import _kernels
from vidsentry._kernels import _fallback

native = pytest.importorskip(
    "vidsentry._kernels._native", reason="compiled kernel extension not built"
)

import numpy as np


def _rand_boxes(rng: random.Random, n: int) -> list[tuple[float, float, float, float]]:
    out = []
    for _ in range(n):
        x0, y0 = rng.uniform(0, 900), rng.uniform(0, 900)
        out.append((x0, y0, x0 + rng.uniform(1, 1000 - x0), y0 + rng.uniform(1, 1000 - y0)))
    return out


class TestBackendAgreement:
    def test_box_iou(self):
        rng = random.Random(1)
        for _ in range(500):
            (a,) = _rand_boxes(rng, 1)
            (b,) = _rand_boxes(rng, 1)
            assert native.box_iou(*a, *b) == pytest.approx(
                _fallback.box_iou(*a, *b), abs=1e-15
            )

    def test_max_iou_sum(self):
        rng = random.Random(2)
        for _ in range(200):
            gt = _rand_boxes(rng, rng.randint(0, 6))
            preds = _rand_boxes(rng, rng.randint(0, 6))
            got = native.max_iou_sum(
                np.asarray(gt, dtype=np.float64).reshape(-1, 4),
                np.asarray(preds, dtype=np.float64).reshape(-1, 4),
            )
            assert got == pytest.approx(_fallback.max_iou_sum(gt, preds), abs=1e-12)

    def test_kl_terms_sum(self):
        rng = random.Random(3)
        for _ in range(100):
            rhos = [rng.uniform(1e-4, 1e3) for _ in range(rng.randint(1, 2000))]
            got = native.kl_terms_sum(np.asarray(rhos, dtype=np.float64))
            assert got == pytest.approx(_fallback.kl_terms_sum(rhos), rel=1e-12, abs=1e-12)

    def test_clip_surrogate_sum(self):
        rng = random.Random(4)
        for _ in range(100):
            ratios = [rng.uniform(0.01, 5.0) for _ in range(rng.randint(1, 2000))]
            adv = rng.uniform(-3, 3)
            eps = rng.choice([0.1, 0.2, 0.3])
            got = native.clip_surrogate_sum(np.asarray(ratios, dtype=np.float64), adv, eps)
            assert got == pytest.approx(
                _fallback.clip_surrogate_sum(ratios, adv, eps), rel=1e-12, abs=1e-12
            )


class TestKahanStability:
    def test_permutation_stability_native(self):
        rng = random.Random(5)
        rhos = [rng.uniform(0.5, 2.0) for _ in range(4096)]
        base = native.kl_terms_sum(np.asarray(rhos, dtype=np.float64))
        for _ in range(10):
            rng.shuffle(rhos)
            assert native.kl_terms_sum(np.asarray(rhos, dtype=np.float64)) == pytest.approx(
                base, abs=1e-10
            )

    def test_fsum_is_order_exact(self):
        rng = random.Random(6)
        values = [rng.uniform(0.5, 2.0) for _ in range(4096)]
        base = _fallback.kl_terms_sum(values)
        rng.shuffle(values)
        assert _fallback.kl_terms_sum(values) == pytest.approx(base, abs=1e-12)


class TestDispatch:
    def test_active_backend_reported(self):
        assert _kernels.BACKEND in ("native", "fallback")

    def test_wrapper_accepts_plain_sequences(self):
        assert _kernels.max_iou_sum([(0, 0, 100, 100)], []) == 0.0
        assert _kernels.kl_terms_sum([1.0, 1.0]) == 0.0
        assert _kernels.clip_surrogate_sum([1.0], 2.0, 0.2) == 2.0

    def test_hand_fixvalues(self):
        assert _kernels.box_iou_xyxy(0, 0, 100, 100, 50, 0, 150, 100) == pytest.approx(1 / 3)
        assert _kernels.kl_terms_sum([2.0]) == pytest.approx(2 - math.log(2) - 1, abs=1e-15)
        assert _kernels.clip_surrogate_sum([1.5], 1.0, 0.2) == pytest.approx(1.2)
        assert _kernels.clip_surrogate_sum([0.5], -1.0, 0.2) == pytest.approx(-0.8)

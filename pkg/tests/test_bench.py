from __future__ import annotations

import json
import random

import pytest

from vidsentry.annotations import AnnotationDocument
from vidsentry.bench import (
    BUCKET_KEYS,
    Confusion,
    MetricReport,
    PredictionRecord,
    bucket_of,
    confusion,
    emit_report,
    evaluate_corpus,
    hard_split_recall,
    load_predictions,
    localization_iou,
    per_category_recall,
    prediction_from_dict,
    prf_metrics,
    report_from_dict,
    save_predictions,
    verdict_to_prediction,
)
from vidsentry.domain import (
    AnomalyAnnotation,
    AnomalyType,
    Basis,
    BBox,
    FrameSpan,
    GroundTruth,
    SaliencyLabel,
    Status,
)
from vidsentry.errors import DomainError
from vidsentry.orchestrator import run_two_turn
from vidsentry.rewards import aggregate_reward
from vidsentry.synth import bucket_spec, generate_video

OBJ = AnomalyType.OBJECT_DISTORTION
HUM = AnomalyType.HUMAN_DISTORTION


def abnormal_gt(video_id, span=(3, 7), types=(OBJ,), boxes=None):
    anomalies = tuple(
        AnomalyAnnotation(
            type=t,
            span=FrameSpan(span[0], span[1], Basis.SPARSE),
            reason="",
            boxes=boxes or {},
            saliency=SaliencyLabel.SALIENT,
        )
        for t in types
    )
    return GroundTruth(video_id, Status.ABNORMAL, anomalies)


def normal_gt(video_id):
    return GroundTruth(video_id, Status.NORMAL)


def pred(video_id, status, windows=(), boxes=None, types=None):
    return PredictionRecord(
        video_id=video_id,
        status=status,
        windows=tuple(FrameSpan(a, b, Basis.SPARSE) for a, b in windows),
        boxes=boxes,
        types=types,
    )


class TestConfusion:
    def test_all_correct_balanced(self):
        gts = [abnormal_gt(f"a{i}") for i in range(10)] + [normal_gt(f"n{i}") for i in range(10)]
        preds = [pred(f"a{i}", Status.ABNORMAL, [(3, 7)]) for i in range(10)]
        preds += [pred(f"n{i}", Status.NORMAL) for i in range(10)]
        c = confusion(preds, gts)
        assert (c.tp, c.tn, c.fp, c.fn) == (10, 10, 0, 0)

    def test_always_abnormal_pattern(self):
        gts = [abnormal_gt(f"a{i}") for i in range(10)] + [normal_gt(f"n{i}") for i in range(10)]
        preds = [pred(g.video_id, Status.ABNORMAL, [(0, 1)]) for g in gts]
        c = confusion(preds, gts)
        assert (c.tp, c.fp, c.tn, c.fn) == (10, 10, 0, 0)

    def test_missing_id_is_error(self):
        gts = [normal_gt("a"), normal_gt("b")]
        with pytest.raises(DomainError, match="mismatch"):
            confusion([pred("a", Status.NORMAL)], gts)

    def test_duplicate_id_is_error(self):
        gts = [normal_gt("a")]
        with pytest.raises(DomainError, match="duplicate"):
            confusion([pred("a", Status.NORMAL), pred("a", Status.NORMAL)], gts)


def headline_confusion() -> Confusion:
    return Confusion(tp=455, fn=45, tn=362, fp=138)


class TestPrfMetrics:
    def test_headline_fixture_reproduction(self):
        report = prf_metrics(headline_confusion())
        assert report.abnormal.recall == pytest.approx(0.910, abs=5e-4)
        assert report.abnormal.precision == pytest.approx(0.767, abs=5e-4)
        assert report.abnormal.f1 == pytest.approx(0.833, abs=5e-4)
        assert report.normal.recall == pytest.approx(0.724, abs=5e-4)
        assert report.normal.precision == pytest.approx(0.889, abs=5e-4)
        assert report.normal.f1 == pytest.approx(0.798, abs=5e-4)
        assert report.accuracy == pytest.approx(0.817, abs=5e-4)

    def test_all_correct_is_ones(self):
        report = prf_metrics(Confusion(tp=5, fp=0, tn=5, fn=0))
        assert report.accuracy == 1.0
        assert report.abnormal == report.normal

    def test_zero_denominator_flagged(self):
        report = prf_metrics(Confusion(tp=0, fp=0, tn=3, fn=2))
        assert report.abnormal.recall == 0.0
        assert report.abnormal.precision == 0.0
        assert "abnormal_precision" in report.zero_denominator_flags

    def test_accuracy_exact_and_f1_harmonic(self):
        rng = random.Random(2)
        for _ in range(100):
            c = Confusion(
                tp=rng.randint(0, 50), fp=rng.randint(0, 50),
                tn=rng.randint(0, 50), fn=rng.randint(0, 50),
            )
            if c.total == 0:
                continue
            report = prf_metrics(c)
            assert report.accuracy == (c.tp + c.tn) / c.total
            for cls in (report.abnormal, report.normal):
                if cls.recall + cls.precision > 0:
                    harmonic = 2 * cls.recall * cls.precision / (cls.recall + cls.precision)
                    assert abs(cls.f1 - harmonic) < 1e-12


class TestHardSplit:
    def _bucketed_corpus(self):
        gts, specs = [], []
        for b, (short, small) in enumerate(
            [(True, True), (True, False), (False, True), (False, False)]
        ):
            for i in range(5):
                spec = bucket_spec(f"b{b}-{i}", seed=31 * b + i, short_duration=short,
                                   small_extent=small)
                _, gt = generate_video(spec)
                gts.append(gt)
        return gts

    def test_buckets_partition_corpus(self):
        gts = self._bucketed_corpus()
        preds = [pred(g.video_id, Status.ABNORMAL, [(0, 1)]) for g in gts]
        recalls = hard_split_recall(preds, gts)
        assert set(recalls) == set(BUCKET_KEYS)
        assert all(r == 1.0 for r in recalls.values())

    def test_boundary_exactly_one_second_is_long(self):
        # 4 annotated frames at 4 fps: duration exactly 1.0 s.
        gt = abnormal_gt("edge", span=(0, 3), boxes={0: (BBox(0, 0, 100, 100),)})
        assert bucket_of(gt).startswith("long_")
        # 3 frames: 0.75 s, strictly under the threshold.
        gt2 = abnormal_gt("edge2", span=(0, 2), boxes={0: (BBox(0, 0, 100, 100),)})
        assert bucket_of(gt2).startswith("short_")

    def test_extent_boundary_strict(self):
        # Exactly 20% of the frame: counts as large.
        box = BBox(0, 0, 500, 400)  # 200,000 of 1,000,000
        gt = abnormal_gt("e", span=(0, 1), boxes={0: (box,), 1: (box,)})
        assert bucket_of(gt).endswith("_large")

    def test_normal_gt_rejected(self):
        with pytest.raises(DomainError):
            hard_split_recall([pred("n", Status.NORMAL)], [normal_gt("n")])

    def test_extent_max_mode(self):
        small = BBox(0, 0, 100, 100)
        large = BBox(0, 0, 600, 600)
        gt = abnormal_gt("m", span=(0, 1), boxes={0: (small,), 1: (large,)})
        assert bucket_of(gt, extent_mode="mean") .endswith("_small")
        assert bucket_of(gt, extent_mode="max").endswith("_large")


class TestPerCategoryRecall:
    def test_single_category_perfect(self):
        gts = [abnormal_gt(f"v{i}", types=(OBJ,)) for i in range(4)]
        preds = [pred(g.video_id, Status.ABNORMAL, [(3, 7)]) for g in gts]
        recalls = per_category_recall(preds, gts)
        assert recalls[OBJ] == 1.0
        assert recalls[HUM] == 0.0  # no such videos: reported as 0

    def test_always_normal_all_zero(self):
        gts = [abnormal_gt(f"v{i}", types=(OBJ, HUM)) for i in range(4)]
        preds = [pred(g.video_id, Status.NORMAL) for g in gts]
        recalls = per_category_recall(preds, gts)
        assert recalls[OBJ] == 0.0 and recalls[HUM] == 0.0

    def test_mixed_corpus_hand_counts(self):
        gts = [
            abnormal_gt("v0", types=(OBJ,)),
            abnormal_gt("v1", types=(OBJ,)),
            abnormal_gt("v2", types=(HUM,)),
            abnormal_gt("v3", types=(OBJ, HUM)),
            abnormal_gt("v4", types=(HUM,)),
            normal_gt("v5"),
        ]
        preds = [
            pred("v0", Status.ABNORMAL, [(3, 7)]),
            pred("v1", Status.NORMAL),  # the one miss
            pred("v2", Status.ABNORMAL, [(3, 7)]),
            pred("v3", Status.ABNORMAL, [(3, 7)]),
            pred("v4", Status.ABNORMAL, [(3, 7)]),
            pred("v5", Status.NORMAL),
        ]
        recalls = per_category_recall(preds, gts)
        assert recalls[OBJ] == pytest.approx(2 / 3)
        assert recalls[HUM] == 1.0

    def test_type_matched_mode(self):
        gts = [abnormal_gt("v0", types=(OBJ,))]
        preds = [pred("v0", Status.ABNORMAL, [(3, 7)], types=frozenset({HUM}))]
        assert per_category_recall(preds, gts)[OBJ] == 1.0
        assert per_category_recall(preds, gts, type_matched=True)[OBJ] == 0.0


def doc_for(gt: GroundTruth, frame_count=120, fps=24.0) -> AnnotationDocument:
    return AnnotationDocument(
        video_id=gt.video_id, frame_count=frame_count, source_fps=fps, ground_truth=gt
    )


class TestLocalizationIoU:
    def test_perfect_predictions(self):
        box = BBox(100, 100, 300, 300)
        gt = abnormal_gt("v", span=(4, 6), boxes={k: (box,) for k in (4, 5, 6)})
        # Annotation frame k sits at source index 6k for a 24 fps video.
        preds = [
            pred("v", Status.ABNORMAL, [(4, 6)], boxes={24: (box,), 30: (box,), 36: (box,)})
        ]
        mean_t, mean_s = localization_iou(preds, [doc_for(gt)])
        assert mean_t == 1.0
        assert mean_s == 1.0

    def test_always_normal_scores_zero(self):
        gt = abnormal_gt("v", span=(4, 6), boxes={4: (BBox(0, 0, 100, 100),)})
        mean_t, mean_s = localization_iou([pred("v", Status.NORMAL)], [doc_for(gt)])
        assert (mean_t, mean_s) == (0.0, 0.0)

    def test_jittered_window_matches_naive_recomputation(self):
        box = BBox(100, 100, 300, 300)
        gt = abnormal_gt("v", span=(5, 8), boxes={k: (box,) for k in (5, 6, 7, 8)})
        # One-frame-late window: predicted {6..9} vs truth {5..8}.
        preds = [
            pred(
                "v",
                Status.ABNORMAL,
                [(6, 9)],
                boxes={36: (box,), 42: (box,), 48: (box,), 54: (box,)},
            )
        ]
        mean_t, mean_s = localization_iou(preds, [doc_for(gt)])
        # Independent set arithmetic: |{6,7,8}| / |{5..9}| = 3/5.
        assert mean_t == pytest.approx(3 / 5)
        # Three matched frames carry one GT box each, all exactly predicted.
        assert mean_s == pytest.approx(1.0)

    def test_matches_reward_kernel_semantics(self, world, perfect_judge):
        """Benchmark localization equals the reward kernel on the same video."""
        from vidsentry.orchestrator import build_rollout

        docs, preds = [], []
        for vid in world.ids:
            gt = world.ground_truth(vid)
            if gt.status is not Status.ABNORMAL:
                continue
            video = world.video(vid)
            docs.append(
                AnnotationDocument(
                    video_id=vid,
                    frame_count=video.frame_count,
                    source_fps=video.source_fps,
                    ground_truth=gt,
                )
            )
            verdict = run_two_turn(video, "p", perfect_judge)
            preds.append(verdict_to_prediction(verdict, vid))
            record = build_rollout(video, "p", perfect_judge)
            breakdown = aggregate_reward(record, gt)
            assert breakdown.r_temp == pytest.approx(1.0, abs=1e-12)
            assert breakdown.r_spa == pytest.approx(1.0, abs=1e-12)
        mean_t, mean_s = localization_iou(preds, docs)
        assert mean_t == pytest.approx(1.0, abs=1e-12)
        assert mean_s == pytest.approx(1.0, abs=1e-12)


class TestReportEmission:
    def _report(self) -> MetricReport:
        return prf_metrics(headline_confusion())

    def test_json_emission_is_idempotent(self):
        report = self._report()
        text = emit_report(report, "json")
        reparsed = report_from_dict(json.loads(text))
        assert emit_report(reparsed, "json") == text

    def test_json_fields_within_rounding(self):
        obj = json.loads(emit_report(self._report(), "json"))
        assert obj["accuracy"] == 0.817
        assert obj["counts"] == {"tp": 455, "fp": 138, "tn": 362, "fn": 45, "total": 1000}

    def test_csv_header_fixed(self):
        text = emit_report(self._report(), "csv")
        header = text.splitlines()[0]
        assert header == (
            "abnormal_recall,abnormal_precision,abnormal_f1,"
            "normal_recall,normal_precision,normal_f1,accuracy,tp,fp,tn,fn"
        )

    def test_markdown_reproduces_headline_row_at_3_decimals(self):
        text = emit_report(self._report(), "md")
        row = text.splitlines()[-1]
        for value in ("0.910", "0.767", "0.833", "0.724", "0.889", "0.798", "0.817"):
            assert value in row

    def test_unknown_format_rejected(self):
        with pytest.raises(DomainError):
            emit_report(self._report(), "yaml")


class TestPredictionIO:
    def test_jsonl_round_trip(self, tmp_path):
        records = [
            pred("a", Status.ABNORMAL, [(2, 5)], boxes={12: (BBox(0, 0, 50, 50),)},
                 types=frozenset({OBJ})),
            pred("b", Status.NORMAL),
        ]
        path = tmp_path / "preds.jsonl"
        save_predictions(records, path)
        assert load_predictions(path) == records

    def test_single_window_key_accepted(self):
        record = prediction_from_dict(
            {"video_id": "x", "status": "abnormal", "window": [2, 5]}
        )
        assert record.windows == (FrameSpan(2, 5, Basis.SPARSE),)

    def test_normal_with_localization_rejected(self):
        with pytest.raises(DomainError):
            PredictionRecord(
                video_id="x", status=Status.NORMAL,
                windows=(FrameSpan(0, 1, Basis.SPARSE),),
            )


class TestEvaluateCorpus:
    def test_full_report_on_synthetic_world(self, world, perfect_judge):
        docs, preds = [], []
        for vid in world.ids:
            video = world.video(vid)
            docs.append(
                AnnotationDocument(
                    video_id=vid,
                    frame_count=video.frame_count,
                    source_fps=video.source_fps,
                    ground_truth=world.ground_truth(vid),
                )
            )
            verdict = run_two_turn(video, "p", perfect_judge)
            preds.append(verdict_to_prediction(verdict, vid))
        report = evaluate_corpus(preds, docs)
        assert report.accuracy == 1.0
        assert report.mean_temporal_iou == pytest.approx(1.0)
        assert report.mean_spatial_iou == pytest.approx(1.0)
        assert report.bucket_recalls is None  # mixed corpus: no hard split

"""Benchmark scoring: confusion metrics, difficulty-bucketed recall,
per-category recall, and localization IoU summaries, with report emission.

Localization metrics deliberately run through the same set/box primitives as
the reward functions, so benchmark numbers and training rewards can never
drift apart.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

from . import sampling
from .annotations import AnnotationDocument
from .domain import (
    DEFAULT_ANNOTATION_FPS,
    AnomalyType,
    Basis,
    BBox,
    FrameSpan,
    GroundTruth,
    Status,
    frame_set,
    union_area,
    COORD_MAX,
)
from .errors import DomainError
from .orchestrator import Verdict
from .rewards import gt_boxes_by_frame, matched_spatial_iou, set_iou

FRAME_AREA = float(COORD_MAX * COORD_MAX)

BUCKET_KEYS = ("short_small", "short_large", "long_small", "long_large")


@dataclass(frozen=True)
class PredictionRecord:
    """One serialized verdict; normal predictions carry no localization."""

    video_id: str
    status: Status
    windows: tuple[FrameSpan, ...] = ()  # sparse basis
    boxes: Mapping[int, tuple[BBox, ...]] | None = None  # source basis
    types: frozenset[AnomalyType] | None = None

    def __post_init__(self) -> None:
        if self.status is Status.NORMAL and (self.windows or self.boxes or self.types):
            raise DomainError(
                f"{self.video_id}: normal predictions carry no localization fields"
            )


def verdict_to_prediction(verdict: Verdict, video_id: str) -> PredictionRecord:
    if verdict.status is Status.NORMAL:
        return PredictionRecord(video_id=video_id, status=Status.NORMAL)
    windows = tuple(
        e.time_region for e in (verdict.turn1.entries if verdict.turn1 else ()) if e.time_region
    )
    boxes: dict[int, tuple[BBox, ...]] = {}
    for entry in verdict.evidence:
        for src, entry_boxes in entry.boxes_by_source_frame.items():
            boxes[src] = boxes.get(src, ()) + tuple(entry_boxes)
    types = set()
    for resp in (verdict.turn1, verdict.turn2):
        if resp is not None:
            types.update(e.type for e in resp.entries)
    return PredictionRecord(
        video_id=video_id,
        status=Status.ABNORMAL,
        windows=windows,
        boxes=boxes or None,
        types=frozenset(types) or None,
    )


def prediction_to_dict(pred: PredictionRecord) -> dict[str, Any]:
    out: dict[str, Any] = {"video_id": pred.video_id, "status": pred.status.value}
    if pred.windows:
        out["windows"] = [[w.start, w.end] for w in pred.windows]
    if pred.boxes:
        out["boxes"] = {
            str(src): [list(b.as_tuple()) for b in boxes]
            for src, boxes in sorted(pred.boxes.items())
        }
    if pred.types:
        out["types"] = sorted(t.label for t in pred.types)
    return out


def prediction_from_dict(obj: Mapping[str, Any]) -> PredictionRecord:
    from .domain import parse_taxonomy_label

    status = Status(obj["status"])
    windows: list[FrameSpan] = []
    raw_windows = obj.get("windows")
    if raw_windows is None and obj.get("window") is not None:
        raw_windows = [obj["window"]]
    for pair in raw_windows or []:
        windows.append(FrameSpan(int(pair[0]), int(pair[1]), Basis.SPARSE))
    boxes: dict[int, tuple[BBox, ...]] = {}
    for src, box_list in (obj.get("boxes") or {}).items():
        boxes[int(src)] = tuple(BBox(*map(int, b)) for b in box_list)
    types = frozenset(parse_taxonomy_label(t) for t in obj.get("types", [])) or None
    return PredictionRecord(
        video_id=obj["video_id"],
        status=status,
        windows=tuple(windows),
        boxes=boxes or None,
        types=types,
    )


def load_predictions(path: Union[str, Path]) -> list[PredictionRecord]:
    """Read a JSON-lines prediction file (one record per line)."""
    records = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(prediction_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise DomainError(f"{path}:{line_no}: bad prediction record: {exc}") from exc
    return records


def save_predictions(records: Iterable[PredictionRecord], path: Union[str, Path]) -> None:
    lines = [json.dumps(prediction_to_dict(r), ensure_ascii=False) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _index_predictions(preds: Sequence[PredictionRecord]) -> dict[str, PredictionRecord]:
    by_id: dict[str, PredictionRecord] = {}
    duplicates = []
    for pred in preds:
        if pred.video_id in by_id:
            duplicates.append(pred.video_id)
        by_id[pred.video_id] = pred
    if duplicates:
        raise DomainError(f"duplicate prediction ids: {sorted(set(duplicates))}")
    return by_id


def _reconcile(
    preds: Sequence[PredictionRecord], gts: Sequence[GroundTruth]
) -> list[tuple[PredictionRecord, GroundTruth]]:
    by_id = _index_predictions(preds)
    gt_ids = {gt.video_id for gt in gts}
    if len(gt_ids) != len(gts):
        raise DomainError("duplicate ground-truth ids")
    missing = sorted(gt_ids - by_id.keys())
    extra = sorted(by_id.keys() - gt_ids)
    if missing or extra:
        raise DomainError(
            f"prediction/ground-truth id mismatch: missing={missing[:10]} extra={extra[:10]}"
        )
    return [(by_id[gt.video_id], gt) for gt in gts]


def confusion(preds: Sequence[PredictionRecord], gts: Sequence[GroundTruth]) -> Confusion:
    """Exact confusion counts with Abnormal as the positive class."""
    tp = fp = tn = fn = 0
    for pred, gt in _reconcile(preds, gts):
        if gt.status is Status.ABNORMAL:
            if pred.status is Status.ABNORMAL:
                tp += 1
            else:
                fn += 1
        else:
            if pred.status is Status.ABNORMAL:
                fp += 1
            else:
                tn += 1
    return Confusion(tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass(frozen=True)
class ClassMetrics:
    recall: float
    precision: float
    f1: float


@dataclass(frozen=True)
class MetricReport:
    counts: Confusion
    abnormal: ClassMetrics
    normal: ClassMetrics
    accuracy: float
    zero_denominator_flags: tuple[str, ...] = ()
    bucket_recalls: Mapping[str, float] | None = None
    per_category_recall: Mapping[str, float] | None = None
    mean_temporal_iou: float | None = None
    mean_spatial_iou: float | None = None


def _ratio(num: int, den: int, flag: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def prf_metrics(c: Confusion) -> MetricReport:
    """Per-class recall/precision/F1 plus accuracy; zero denominators are
    reported as 0 and flagged."""
    if c.total == 0:
        raise DomainError("metrics need at least one sample")
    flags: list[str] = []
    ab_recall = _ratio(c.tp, c.tp + c.fn, "abnormal_recall", flags)
    ab_precision = _ratio(c.tp, c.tp + c.fp, "abnormal_precision", flags)
    ab_f1 = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, "abnormal_f1", flags)
    no_recall = _ratio(c.tn, c.tn + c.fp, "normal_recall", flags)
    no_precision = _ratio(c.tn, c.tn + c.fn, "normal_precision", flags)
    no_f1 = _ratio(2 * c.tn, 2 * c.tn + c.fn + c.fp, "normal_f1", flags)
    return MetricReport(
        counts=c,
        abnormal=ClassMetrics(ab_recall, ab_precision, ab_f1),
        normal=ClassMetrics(no_recall, no_precision, no_f1),
        accuracy=(c.tp + c.tn) / c.total,
        zero_denominator_flags=tuple(flags),
    )


@dataclass(frozen=True)
class HardSplitThresholds:
    duration_s: float = 1.0
    extent_frac: float = 0.20


def anomaly_duration_seconds(gt: GroundTruth, annotation_fps: float = DEFAULT_ANNOTATION_FPS) -> float:
    """Annotated anomalous frames (union over spans) divided by the basis rate."""
    return len(gt.frame_set()) / annotation_fps


def spatial_extent_fraction(gt: GroundTruth, mode: str = "mean") -> float:
    """Fraction of the frame area covered by the union of ground-truth boxes,
    aggregated over annotated frames by ``mean`` (default) or ``max``."""
    if mode not in ("mean", "max"):
        raise DomainError(f"unknown extent mode {mode!r}")
    per_frame = []
    by_frame = gt_boxes_by_frame(gt)
    for frame in sorted(by_frame):
        per_frame.append(union_area(by_frame[frame]) / FRAME_AREA)
    if not per_frame:
        return 0.0
    return max(per_frame) if mode == "max" else sum(per_frame) / len(per_frame)


def bucket_of(
    gt: GroundTruth,
    thresholds: HardSplitThresholds = HardSplitThresholds(),
    annotation_fps: float = DEFAULT_ANNOTATION_FPS,
    extent_mode: str = "mean",
) -> str:
    """Difficulty bucket: duration strictly under 1 s is short; extent strictly
    under 20% of the frame area is small (a video at exactly 1 s is long)."""
    short = anomaly_duration_seconds(gt, annotation_fps) < thresholds.duration_s
    small = spatial_extent_fraction(gt, extent_mode) < thresholds.extent_frac
    return ("short_" if short else "long_") + ("small" if small else "large")


def hard_split_recall(
    preds: Sequence[PredictionRecord],
    gts: Sequence[GroundTruth],
    thresholds: HardSplitThresholds = HardSplitThresholds(),
    annotation_fps: float = DEFAULT_ANNOTATION_FPS,
    extent_mode: str = "mean",
) -> dict[str, float]:
    """Recall per difficulty bucket over an anomalous-only corpus."""
    hits = {k: 0 for k in BUCKET_KEYS}
    sizes = {k: 0 for k in BUCKET_KEYS}
    for pred, gt in _reconcile(preds, gts):
        if gt.status is not Status.ABNORMAL:
            raise DomainError(f"{gt.video_id}: the hard split contains only anomalous videos")
        key = bucket_of(gt, thresholds, annotation_fps, extent_mode)
        sizes[key] += 1
        if pred.status is Status.ABNORMAL:
            hits[key] += 1
    return {
        k: (hits[k] / sizes[k]) if sizes[k] else 0.0
        for k in BUCKET_KEYS
    }


def per_category_recall(
    preds: Sequence[PredictionRecord],
    gts: Sequence[GroundTruth],
    type_matched: bool = False,
) -> dict[AnomalyType, float]:
    """Recall per taxonomy category; a video counts toward every category it
    contains. A hit is an Abnormal prediction (type-agnostic by default;
    ``type_matched`` additionally requires the category in the predicted set)."""
    hits = {t: 0 for t in AnomalyType}
    sizes = {t: 0 for t in AnomalyType}
    for pred, gt in _reconcile(preds, gts):
        if gt.status is not Status.ABNORMAL:
            continue
        for category in gt.type_set():
            sizes[category] += 1
            if pred.status is not Status.ABNORMAL:
                continue
            if type_matched and (pred.types is None or category not in pred.types):
                continue
            hits[category] += 1
    return {t: (hits[t] / sizes[t]) if sizes[t] else 0.0 for t in AnomalyType}


def localization_iou(
    preds: Sequence[PredictionRecord],
    docs: Sequence[AnnotationDocument],
    annotation_fps: float = DEFAULT_ANNOTATION_FPS,
) -> tuple[float, float]:
    """Mean temporal and spatial IoU over abnormal ground-truth videos.

    Normal predictions against abnormal ground truth contribute 0 to both.
    Predicted boxes arrive on the source basis and are translated back to
    annotation frames through each video's sampling grid.
    """
    pairs = _reconcile(preds, [d.ground_truth for d in docs])
    doc_by_id = {d.video_id: d for d in docs}
    temporal: list[float] = []
    spatial: list[float] = []
    for pred, gt in pairs:
        if gt.status is not Status.ABNORMAL:
            continue
        gt_frames = gt.frame_set()
        pred_frames = frame_set(pred.windows) if pred.windows else set()
        if pred.status is not Status.ABNORMAL or not pred_frames:
            temporal.append(0.0)
            spatial.append(0.0)
            continue
        temporal.append(set_iou(pred_frames, gt_frames))

        matched = pred_frames & gt_frames
        if not matched or not pred.boxes:
            spatial.append(0.0)
            continue
        doc = doc_by_id[gt.video_id]
        sparse = sampling.sample_indices(doc.frame_count, doc.source_fps, annotation_fps)
        position = {src: pos for pos, src in enumerate(sparse)}
        pred_by_ann: dict[int, list[BBox]] = {}
        for src, boxes in pred.boxes.items():
            pos = position.get(src)
            if pos is not None:
                pred_by_ann.setdefault(pos, []).extend(boxes)
        spatial.append(matched_spatial_iou(gt_boxes_by_frame(gt), pred_by_ann, matched))
    if not temporal:
        raise DomainError("localization needs at least one abnormal ground-truth video")
    return sum(temporal) / len(temporal), sum(spatial) / len(spatial)


def evaluate_corpus(
    preds: Sequence[PredictionRecord],
    docs: Sequence[AnnotationDocument],
    annotation_fps: float = DEFAULT_ANNOTATION_FPS,
    type_matched: bool = False,
    extent_mode: str = "mean",
) -> MetricReport:
    """Full benchmark report for a mixed corpus.

    Bucketed recalls are included only when the corpus is anomalous-only;
    localization means are included whenever any abnormal video exists.
    """
    gts = [d.ground_truth for d in docs]
    report = prf_metrics(confusion(preds, gts))

    categories = per_category_recall(preds, gts, type_matched=type_matched)
    abnormal_count = sum(1 for gt in gts if gt.status is Status.ABNORMAL)

    buckets = None
    if abnormal_count == len(gts) and gts:
        buckets = hard_split_recall(preds, gts, annotation_fps=annotation_fps, extent_mode=extent_mode)

    mean_t = mean_s = None
    if abnormal_count:
        mean_t, mean_s = localization_iou(preds, docs, annotation_fps)

    return MetricReport(
        counts=report.counts,
        abnormal=report.abnormal,
        normal=report.normal,
        accuracy=report.accuracy,
        zero_denominator_flags=report.zero_denominator_flags,
        bucket_recalls=buckets,
        per_category_recall={t.label: r for t, r in categories.items()},
        mean_temporal_iou=mean_t,
        mean_spatial_iou=mean_s,
    )


# ---------------------------------------------------------------------------
# Report emission

CSV_HEADER = [
    "abnormal_recall", "abnormal_precision", "abnormal_f1",
    "normal_recall", "normal_precision", "normal_f1",
    "accuracy", "tp", "fp", "tn", "fn",
]


def report_to_dict(report: MetricReport, digits: int = 6) -> dict[str, Any]:
    def r(x: float | None) -> float | None:
        return None if x is None else round(x, digits)

    out: dict[str, Any] = {
        "counts": {
            "tp": report.counts.tp,
            "fp": report.counts.fp,
            "tn": report.counts.tn,
            "fn": report.counts.fn,
            "total": report.counts.total,
        },
        "abnormal": {
            "recall": r(report.abnormal.recall),
            "precision": r(report.abnormal.precision),
            "f1": r(report.abnormal.f1),
        },
        "normal": {
            "recall": r(report.normal.recall),
            "precision": r(report.normal.precision),
            "f1": r(report.normal.f1),
        },
        "accuracy": r(report.accuracy),
        "zero_denominator_flags": list(report.zero_denominator_flags),
    }
    if report.bucket_recalls is not None:
        out["bucket_recalls"] = {k: r(report.bucket_recalls[k]) for k in BUCKET_KEYS}
    if report.per_category_recall is not None:
        out["per_category_recall"] = {
            k: r(v) for k, v in sorted(report.per_category_recall.items())
        }
    if report.mean_temporal_iou is not None:
        out["mean_temporal_iou"] = r(report.mean_temporal_iou)
    if report.mean_spatial_iou is not None:
        out["mean_spatial_iou"] = r(report.mean_spatial_iou)
    return out


def report_from_dict(obj: Mapping[str, Any]) -> MetricReport:
    counts = Confusion(
        tp=obj["counts"]["tp"], fp=obj["counts"]["fp"],
        tn=obj["counts"]["tn"], fn=obj["counts"]["fn"],
    )
    return MetricReport(
        counts=counts,
        abnormal=ClassMetrics(**obj["abnormal"]),
        normal=ClassMetrics(**obj["normal"]),
        accuracy=obj["accuracy"],
        zero_denominator_flags=tuple(obj.get("zero_denominator_flags", ())),
        bucket_recalls=obj.get("bucket_recalls"),
        per_category_recall=obj.get("per_category_recall"),
        mean_temporal_iou=obj.get("mean_temporal_iou"),
        mean_spatial_iou=obj.get("mean_spatial_iou"),
    )


def emit_report(report: MetricReport, fmt: str = "json") -> str:
    """Serialize a report as ``json``, ``csv``, or a ``md`` table row
    (markdown mirrors the benchmark table layout at 3 decimals)."""
    if fmt == "json":
        return json.dumps(report_to_dict(report), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerow(
            [
                f"{report.abnormal.recall:.6f}", f"{report.abnormal.precision:.6f}",
                f"{report.abnormal.f1:.6f}",
                f"{report.normal.recall:.6f}", f"{report.normal.precision:.6f}",
                f"{report.normal.f1:.6f}",
                f"{report.accuracy:.6f}",
                report.counts.tp, report.counts.fp, report.counts.tn, report.counts.fn,
            ]
        )
        return buf.getvalue()
    if fmt == "md":
        header = (
            "| Model | Anomalous Recall | Anomalous Precision | Anomalous F1 "
            "| Normal Recall | Normal Precision | Normal F1 | Acc. |\n"
            "| --- | --- | --- | --- | --- | --- | --- | --- |\n"
        )
        row = (
            f"| engine | {report.abnormal.recall:.3f} | {report.abnormal.precision:.3f} "
            f"| {report.abnormal.f1:.3f} | {report.normal.recall:.3f} "
            f"| {report.normal.precision:.3f} | {report.normal.f1:.3f} "
            f"| {report.accuracy:.3f} |\n"
        )
        return header + row
    raise DomainError(f"unknown report format {fmt!r}; choose json, csv, or md")

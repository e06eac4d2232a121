"""Verifiable reward functions for two-turn rollouts and their weighted,
saliency-discounted aggregation.

Slot accounting for terminated rollouts: turn slots are always scored in
pairs for format/status. A second turn skipped because turn one predicted
Normal carries no format obligation (slot contributes 0); one skipped because
turn one was unparseable or lacked a usable window is a fault (slot
contributes -1). Status passes on abnormal ground truth only when both turns
predict Abnormal, so an unexecuted second slot counts -1 there; on normal
ground truth a Normal first turn settles the check on a single slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from . import _kernels
from .codec import TurnKind, TurnResponse, ValidityReport
from .domain import (
    AnomalyType,
    Basis,
    BBox,
    FrameSpan,
    GroundTruth,
    Status,
    frame_set,
)
from .errors import DomainError


@dataclass(frozen=True)
class RewardWeights:
    """Component weights (w1..w5); defaults are the trained configuration."""

    w_format: float = 1.0
    w_status: float = 2.0
    w_type: float = 2.0
    w_temporal: float = 2.0
    w_spatial: float = 5.0

    def __post_init__(self) -> None:
        for name in ("w_format", "w_status", "w_type", "w_temporal", "w_spatial"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")


DEFAULT_WEIGHTS = RewardWeights()


@dataclass(frozen=True)
class TurnOutcome:
    """A parsed (or unparseable) turn plus its validity report."""

    response: TurnResponse | None
    validity: ValidityReport

    @property
    def ok(self) -> bool:
        return self.response is not None and self.validity.valid


@dataclass(frozen=True)
class RolloutRecord:
    """One two-turn rollout as scored by the reward functions.

    ``turn2 is None`` iff the rollout terminated after turn one (Normal
    first-turn prediction, or an unparseable/invalid first turn — the
    distinction is ground-truth independent and read off ``turn1``).
    ``annotation_map`` translates clip-local second-turn frame indices to the
    annotation basis; present whenever turn two executed.
    """

    turn1: TurnOutcome
    turn2: TurnOutcome | None = None
    window_source: FrameSpan | None = None
    annotation_map: Mapping[int, int] | None = None

    @property
    def executed_turns(self) -> int:
        return 1 if self.turn2 is None else 2

    @property
    def normal_skip(self) -> bool:
        """True when turn two was skipped because turn one predicted Normal."""
        return (
            self.turn2 is None
            and self.turn1.response is not None
            and self.turn1.response.status is Status.NORMAL
        )

    def predicted_windows(self) -> list[FrameSpan]:
        if self.turn1.response is None:
            return []
        return [e.time_region for e in self.turn1.response.entries if e.time_region is not None]

    def predicted_types(self, turn: TurnKind) -> set[AnomalyType]:
        outcome = self.turn1 if turn is TurnKind.TURN_ONE else self.turn2
        if outcome is None or outcome.response is None:
            return set()
        return {e.type for e in outcome.response.entries}


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-component rewards plus the aggregate scalar."""

    r_fmt: float
    r_stat: float
    r_type: float
    r_temp: float
    r_spa: float
    gamma_bar: float
    mask_m: int
    total: float

    def to_dict(self, digits: int = 6) -> dict[str, float | int]:
        return {
            "r_fmt": round(self.r_fmt, digits),
            "r_stat": round(self.r_stat, digits),
            "r_type": round(self.r_type, digits),
            "r_temp": round(self.r_temp, digits),
            "r_spa": round(self.r_spa, digits),
            "gamma_bar": round(self.gamma_bar, digits),
            "mask_m": self.mask_m,
            "total": round(self.total, digits),
        }


def set_iou(a: set, b: set) -> float:
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def format_reward(rollout: RolloutRecord) -> float:
    """Mean over the two turn slots of {0 valid, -1 otherwise}."""
    slot1 = 0.0 if rollout.turn1.ok else -1.0
    if rollout.turn2 is not None:
        slot2 = 0.0 if rollout.turn2.ok else -1.0
    else:
        slot2 = 0.0 if rollout.normal_skip else -1.0
    return (slot1 + slot2) / 2.0


def status_reward(rollout: RolloutRecord, gt: GroundTruth) -> float:
    """Mean over counted turn slots of {0 correct status, -1 otherwise}."""

    def slot(outcome: TurnOutcome | None) -> float:
        if outcome is None or outcome.response is None:
            return -1.0
        return 0.0 if outcome.response.status is gt.status else -1.0

    slots = [slot(rollout.turn1)]
    if rollout.turn2 is not None:
        slots.append(slot(rollout.turn2))
    elif gt.status is Status.ABNORMAL:
        # Passing requires a correct call in both turns; an unexecuted second
        # turn cannot confirm the anomaly.
        slots.append(-1.0)
    return sum(slots) / len(slots)


def _require_abnormal(gt: GroundTruth, op: str) -> None:
    if gt.status is not Status.ABNORMAL:
        raise DomainError(f"{op} is defined only for abnormal ground truth")


def type_iou_reward(rollout: RolloutRecord, gt: GroundTruth) -> float:
    """Mean over the two turns of taxonomy-set IoU against the ground truth.

    An unexecuted second turn contributes 0 to its term.
    """
    _require_abnormal(gt, "type_iou_reward")
    gt_types = gt.type_set()
    total = 0.0
    for turn in (TurnKind.TURN_ONE, TurnKind.TURN_TWO):
        total += set_iou(rollout.predicted_types(turn), gt_types)
    return total / 2.0


def temporal_iou_reward(rollout: RolloutRecord, gt: GroundTruth) -> float:
    """Frame-set IoU between predicted first-turn windows and ground truth."""
    _require_abnormal(gt, "temporal_iou_reward")
    windows = rollout.predicted_windows()
    for span in windows:
        if span.basis is not Basis.SPARSE:
            raise DomainError(f"predicted window on basis {span.basis.value}, expected sparse")
    pred = frame_set(windows)
    if not pred:
        return 0.0
    return set_iou(pred, gt.frame_set())


def matched_spatial_iou(
    gt_boxes_by_frame: Mapping[int, Sequence[BBox]],
    pred_boxes_by_frame: Mapping[int, Sequence[BBox]],
    matched_frames: set[int],
) -> float:
    """Mean over all ground-truth boxes on matched frames of the best IoU
    against same-frame predicted boxes; 0 when no such box exists."""
    count = 0
    total = 0.0
    for frame in sorted(matched_frames):
        gt_boxes = gt_boxes_by_frame.get(frame, ())
        if not gt_boxes:
            continue
        count += len(gt_boxes)
        preds = pred_boxes_by_frame.get(frame, ())
        total += _kernels.max_iou_sum(
            [b.as_tuple() for b in gt_boxes], [b.as_tuple() for b in preds]
        )
    if count == 0:
        return 0.0
    return total / count


def gt_boxes_by_frame(gt: GroundTruth) -> dict[int, list[BBox]]:
    out: dict[int, list[BBox]] = {}
    for anomaly in gt.anomalies:
        for frame, boxes in anomaly.boxes.items():
            out.setdefault(frame, []).extend(boxes)
    return out


def spatial_iou_reward(rollout: RolloutRecord, gt: GroundTruth) -> float:
    """Mean IoU over ground-truth boxes on temporally matched frames.

    Predicted boxes arrive on clip-local second-turn indices and are
    translated through the rollout's annotation map; entries sharing a frame
    have their box lists concatenated.
    """
    _require_abnormal(gt, "spatial_iou_reward")
    if rollout.turn2 is None:
        return 0.0

    matched = frame_set(rollout.predicted_windows()) & gt.frame_set()
    if not matched:
        return 0.0

    index_map = rollout.annotation_map
    if index_map is None:
        raise DomainError("rollout executed turn two without an annotation map")
    mapped = set(index_map.values())
    missing = matched - mapped
    if missing:
        raise DomainError(f"annotation map missing matched frames {sorted(missing)}")

    pred_by_frame: dict[int, list[BBox]] = {}
    if rollout.turn2.response is not None:
        for entry in rollout.turn2.response.entries:
            for clip_frame, boxes in (entry.boxes or {}).items():
                ann = index_map.get(clip_frame)
                if ann is None:
                    continue  # clip frame off the annotation grid: unscoreable
                pred_by_frame.setdefault(ann, []).extend(boxes)

    return matched_spatial_iou(gt_boxes_by_frame(gt), pred_by_frame, matched)


def aggregate_total(
    r_fmt: float,
    r_stat: float,
    r_type: float,
    r_temp: float,
    r_spa: float,
    gamma: float,
    mask: int,
    weights: RewardWeights = DEFAULT_WEIGHTS,
) -> float:
    """The aggregation formula itself.

    ``total = w1*R_fmt + w2*g*R_stat + m*(w3*T(R_type) + w4*T(R_temp) +
    w5*T(R_spa))`` where ``g`` is 1 for normal ground truth and the mean
    saliency discount otherwise, ``m`` masks the localization terms on
    normal ground truth, and ``T(r) = 1 - g*(1 - r)`` softens localization
    misses on hard-to-verify anomalies.
    """

    def soften(r: float) -> float:
        return 1.0 - gamma * (1.0 - r)

    total = weights.w_format * r_fmt + weights.w_status * gamma * r_stat
    if mask:
        total += (
            weights.w_type * soften(r_type)
            + weights.w_temporal * soften(r_temp)
            + weights.w_spatial * soften(r_spa)
        )
    return total


def aggregate_reward(
    rollout: RolloutRecord,
    gt: GroundTruth,
    weights: RewardWeights = DEFAULT_WEIGHTS,
) -> RewardBreakdown:
    """Score every component and combine via :func:`aggregate_total`."""
    r_fmt = format_reward(rollout)
    r_stat = status_reward(rollout, gt)
    if gt.status is Status.ABNORMAL:
        mask = 1
        gamma = gt.mean_saliency_discount()
        r_type = type_iou_reward(rollout, gt)
        r_temp = temporal_iou_reward(rollout, gt)
        r_spa = spatial_iou_reward(rollout, gt)
    else:
        mask = 0
        gamma = 1.0
        r_type = r_temp = r_spa = 0.0

    total = aggregate_total(r_fmt, r_stat, r_type, r_temp, r_spa, gamma, mask, weights)
    return RewardBreakdown(
        r_fmt=r_fmt,
        r_stat=r_stat,
        r_type=r_type,
        r_temp=r_temp,
        r_spa=r_spa,
        gamma_bar=gamma,
        mask_m=mask,
        total=total,
    )

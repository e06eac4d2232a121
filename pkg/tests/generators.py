"""Seeded random generators for rollout/ground-truth pairs.

Used by the differential reward tests: cases cover terminated rollouts,
invalid turns, partial box coverage, mixed saliency, and multi-anomaly
ground truths, while staying structurally consistent with what the
orchestrator can actually produce.
"""

from __future__ import annotations

import random

from vidsentry.codec import (
    AnomalyEntry,
    TurnKind,
    TurnResponse,
    ValidityReport,
    ViolationCode,
    check_validity,
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
from vidsentry.rewards import RolloutRecord, TurnOutcome

SPARSE_LEN = 21
_TYPES = tuple(AnomalyType)
_SALIENCY = (SaliencyLabel.SALIENT, SaliencyLabel.NON_SALIENT)


def random_box(rng: random.Random) -> BBox:
    x0 = rng.randrange(0, 900)
    y0 = rng.randrange(0, 900)
    return BBox(x0, y0, x0 + rng.randrange(20, 1001 - x0), y0 + rng.randrange(20, 1001 - y0))


def random_ground_truth(rng: random.Random, video_id: str = "case") -> GroundTruth:
    if rng.random() < 0.35:
        return GroundTruth(video_id=video_id, status=Status.NORMAL)
    anomalies = []
    for _ in range(rng.randint(1, 3)):
        start = rng.randrange(0, SPARSE_LEN)
        end = min(SPARSE_LEN - 1, start + rng.randrange(0, 6))
        boxes = {}
        for frame in range(start, end + 1):
            if rng.random() < 0.8:
                boxes[frame] = tuple(random_box(rng) for _ in range(rng.randint(1, 2)))
        anomalies.append(
            AnomalyAnnotation(
                type=rng.choice(_TYPES),
                span=FrameSpan(start, end, Basis.SPARSE),
                reason="planted",
                boxes=boxes,
                saliency=rng.choice(_SALIENCY),
            )
        )
    return GroundTruth(video_id=video_id, status=Status.ABNORMAL, anomalies=tuple(anomalies))


def _random_window(rng: random.Random) -> FrameSpan:
    start = rng.randrange(0, SPARSE_LEN)
    end = min(SPARSE_LEN - 1, start + rng.randrange(0, 7))
    return FrameSpan(start, end, Basis.SPARSE)


def _random_turn_one(rng: random.Random) -> TurnOutcome:
    roll = rng.random()
    if roll < 0.12:
        return TurnOutcome(None, ValidityReport((ViolationCode.NOT_JSON,)))
    status = Status.ABNORMAL if rng.random() < 0.72 else Status.NORMAL
    entries = []
    if status is Status.ABNORMAL:
        for _ in range(rng.choice([0, 1, 1, 1, 2])):
            window = None if rng.random() < 0.15 else _random_window(rng)
            entries.append(AnomalyEntry(type=rng.choice(_TYPES), time_region=window))
    resp = TurnResponse(TurnKind.TURN_ONE, status, "scan", tuple(entries))
    return TurnOutcome(resp, check_validity(resp, TurnKind.TURN_ONE))


def random_case(rng: random.Random) -> tuple[RolloutRecord, GroundTruth]:
    gt = random_ground_truth(rng)
    turn1 = _random_turn_one(rng)
    executes = (
        turn1.ok
        and turn1.response is not None
        and turn1.response.status is Status.ABNORMAL
    )
    if not executes:
        return RolloutRecord(turn1=turn1), gt

    windows = [e.time_region for e in turn1.response.entries if e.time_region]
    hull_start = min(w.start for w in windows)
    hull_end = max(w.end for w in windows)
    ann_frames = list(range(hull_start, hull_end + 1))
    # Dense clip at twice the sparse rate: even clip positions land on
    # annotation frames, odd ones fall between them.
    clip_len = 2 * len(ann_frames) - 1
    annotation_map = {2 * k: frame for k, frame in enumerate(ann_frames)}

    roll = rng.random()
    if roll < 0.10:
        turn2 = TurnOutcome(None, ValidityReport((ViolationCode.NOT_JSON,)))
    else:
        status2 = Status.ABNORMAL if rng.random() < 0.78 else Status.NORMAL
        entries2 = []
        if status2 is Status.ABNORMAL:
            for _ in range(rng.randint(1, 2)):
                if rng.random() < 0.75:
                    frames = range(clip_len)  # full coverage
                else:
                    frames = sorted(
                        rng.sample(range(clip_len), rng.randint(1, clip_len))
                    )
                boxes = {k: (random_box(rng),) for k in frames}
                entries2.append(AnomalyEntry(type=rng.choice(_TYPES), boxes=boxes))
        resp2 = TurnResponse(TurnKind.TURN_TWO, status2, "ground", tuple(entries2))
        turn2 = TurnOutcome(
            resp2, check_validity(resp2, TurnKind.TURN_TWO, expected_clip_frames=clip_len)
        )
    record = RolloutRecord(
        turn1=turn1,
        turn2=turn2,
        window_source=FrameSpan(hull_start, hull_end, Basis.SOURCE),
        annotation_map=annotation_map,
    )
    return record, gt

"""Coarse-to-fine two-turn inference over a pluggable judge backend.

Turn one scans a sparsely sampled frame sequence and proposes anomalous time
windows; the flagged interval is cropped, densely resampled, and handed back
for fine-grained spatial grounding in turn two, which makes the final call.
A video is conservatively classified normal whenever the second turn fails
to confirm the anomaly (or cannot run because the first turn produced no
usable window).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence, TypeVar, runtime_checkable

from . import sampling
from .codec import (
    TurnKind,
    TurnResponse,
    ValidityReport,
    ViolationCode,
    check_validity,
    parse_turn,
    serialize_turn,
)
from .domain import Basis, BBox, FrameSpan, GroundTruth, Status, VideoDescriptor
from .errors import DomainError, ParseError
from .rewards import (
    DEFAULT_WEIGHTS,
    RewardBreakdown,
    RewardWeights,
    RolloutRecord,
    TurnOutcome,
    aggregate_reward,
)

U = TypeVar("U")


@dataclass(frozen=True)
class JudgeReply:
    """One judge answer: raw structured text plus verdict-token probabilities."""

    raw_text: str
    p_normal: float
    p_abnormal: float

    def __post_init__(self) -> None:
        for name, p in (("p_normal", self.p_normal), ("p_abnormal", self.p_abnormal)):
            if not (0.0 <= p <= 1.0):
                raise DomainError(f"{name} must lie in [0, 1], got {p!r}")


@runtime_checkable
class JudgeBackend(Protocol):
    """Anything that can answer one turn. Implementations must be safe under
    concurrent calls up to their declared ``max_concurrency``."""

    max_concurrency: int

    def judge(
        self,
        frames: Sequence[str],
        prompt: str,
        turn: TurnKind,
        prior_cot: Optional[str] = None,
        seed: Optional[int] = None,
    ) -> JudgeReply: ...


@dataclass(frozen=True)
class SamplingConfig:
    sparse_fps: float = 4.0
    dense_fps: float = 8.0
    max_clip_seconds: float | None = None

    def __post_init__(self) -> None:
        if not (self.dense_fps >= self.sparse_fps > 0):
            raise DomainError(
                f"need dense_fps >= sparse_fps > 0, got {self.dense_fps} / {self.sparse_fps}"
            )
        if self.max_clip_seconds is not None and self.max_clip_seconds <= 0:
            raise DomainError("max_clip_seconds must be positive when set")


DEFAULT_SAMPLING = SamplingConfig()


@dataclass(frozen=True)
class ClipDescriptor:
    """A cropped, densely resampled clip with its index translations."""

    source_span: FrameSpan  # SOURCE basis, inclusive
    dense_indices: tuple[int, ...]  # clip-local position -> source index
    handles: tuple[str, ...]
    annotation_map: dict[int, int]  # clip-local position -> sparse position

    def index_map(self, clip_local: int) -> int:
        """Source index shown at a clip-local position."""
        return self.dense_indices[clip_local]

    def __len__(self) -> int:
        return len(self.dense_indices)


@dataclass(frozen=True)
class EvidenceEntry:
    """Confirmed anomaly evidence with indices translated to the source basis."""

    type_label: str
    reason: str
    problem_region: str
    boxes_by_source_frame: dict[int, tuple[BBox, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class Verdict:
    status: Status
    scalar_reward: float
    turn1: TurnResponse | None
    turn2: TurnResponse | None = None
    window_source: FrameSpan | None = None
    evidence: tuple[EvidenceEntry, ...] = ()
    flags: tuple[str, ...] = ()


def sample_frames(video: VideoDescriptor, target_fps: float) -> list[int]:
    """Source frame indices for uniform resampling at ``target_fps``."""
    return sampling.sample_indices(video.frame_count, video.source_fps, target_fps)


def window_hull(windows: Sequence[FrameSpan]) -> FrameSpan:
    """Single covering window (min start to max end) over one turn's windows."""
    if not windows:
        raise DomainError("no windows to hull")
    basis = windows[0].basis
    if any(w.basis is not basis for w in windows):
        raise DomainError("cannot hull windows on mixed bases")
    return FrameSpan(min(w.start for w in windows), max(w.end for w in windows), basis)


def _clamp_span(span: FrameSpan, max_len: int) -> FrameSpan:
    if len(span) <= max_len:
        return span
    center = (span.start + span.end) // 2
    start = max(span.start, center - (max_len - 1) // 2)
    end = min(span.end, start + max_len - 1)
    return FrameSpan(start, end, span.basis)


def crop_window(
    video: VideoDescriptor,
    sparse_indices: Sequence[int],
    window: FrameSpan,
    dense_fps: float = 8.0,
) -> ClipDescriptor:
    """Crop the source video along a sparse-basis window and resample densely.

    The dense index set is the whole-video dense sampling grid restricted to
    the cropped source span; clip frames are re-indexed from 0. With the
    default integer dense/sparse rate ratio, every sparse frame of the window
    reappears in the clip, which is what connects second-turn boxes back to
    annotation frames (``annotation_map``).
    """
    if window.basis is not Basis.SPARSE:
        raise DomainError(f"crop windows live on the sparse basis, got {window.basis.value}")
    if window.violations(len(sparse_indices)):
        raise DomainError(
            f"window [{window.start}, {window.end}] outside sparse sequence of "
            f"length {len(sparse_indices)}"
        )
    src_start = sparse_indices[window.start]
    src_end = sparse_indices[window.end]
    dense = [
        i
        for i in sampling.sample_indices(video.frame_count, video.source_fps, dense_fps)
        if src_start <= i <= src_end
    ]
    if not dense:  # unreachable at default rates; degenerate-config guard
        dense = [src_start]
    sparse_position = {src: pos for pos, src in enumerate(sparse_indices)}
    annotation_map = {
        clip_local: sparse_position[src]
        for clip_local, src in enumerate(dense)
        if src in sparse_position
    }
    return ClipDescriptor(
        source_span=FrameSpan(src_start, src_end, Basis.SOURCE),
        dense_indices=tuple(dense),
        handles=tuple(video.frames[i] for i in dense),
        annotation_map=annotation_map,
    )


def normality_reward(p_normal: float, p_abnormal: float) -> float:
    """Scalar reward from verdict-token probabilities: p_n / (p_n + p_a)."""
    for name, p in (("p_normal", p_normal), ("p_abnormal", p_abnormal)):
        if not (0.0 <= p <= 1.0):
            raise DomainError(f"{name} must lie in [0, 1], got {p!r}")
    denom = p_normal + p_abnormal
    if denom <= 0.0:
        raise DomainError("p_normal + p_abnormal must be positive")
    return p_normal / denom


def _attempt_turn(
    raw: str,
    turn: TurnKind,
    parse_mode: str,
    sequence_length: int | None = None,
    expected_clip_frames: int | None = None,
) -> TurnOutcome:
    try:
        resp = parse_turn(raw, turn, mode=parse_mode, sequence_length=sequence_length)
    except ParseError as exc:
        return TurnOutcome(response=None, validity=ValidityReport((ViolationCode(exc.code),)))
    return TurnOutcome(
        response=resp,
        validity=check_validity(resp, turn, expected_clip_frames=expected_clip_frames),
    )


def _usable_hull(outcome: TurnOutcome, cfg: SamplingConfig) -> FrameSpan | None:
    """Covering window for turn two, or ``None`` when the rollout terminates."""
    if not outcome.ok or outcome.response is None:
        return None
    if outcome.response.status is not Status.ABNORMAL:
        return None
    windows = [e.time_region for e in outcome.response.entries if e.time_region is not None]
    if not windows:
        return None
    hull = window_hull(windows)
    if cfg.max_clip_seconds is not None:
        hull = _clamp_span(hull, max(1, math.floor(cfg.max_clip_seconds * cfg.sparse_fps)))
    return hull


def _derive_seed(seed: int | None, offset: int) -> int | None:
    return None if seed is None else seed + offset


def _evidence(turn2: TurnResponse, clip: ClipDescriptor) -> tuple[EvidenceEntry, ...]:
    out = []
    for entry in turn2.entries:
        boxes_by_source: dict[int, tuple[BBox, ...]] = {}
        for clip_local, boxes in (entry.boxes or {}).items():
            if 0 <= clip_local < len(clip.dense_indices):
                boxes_by_source[clip.index_map(clip_local)] = boxes
        if boxes_by_source:
            out.append(
                EvidenceEntry(
                    type_label=entry.type.label,
                    reason=entry.reason,
                    problem_region=entry.problem_region,
                    boxes_by_source_frame=boxes_by_source,
                )
            )
    return tuple(out)


def run_two_turn(
    video: VideoDescriptor,
    prompt: str,
    judge: JudgeBackend,
    cfg: SamplingConfig = DEFAULT_SAMPLING,
    parse_mode: str = "strict",
    seed: int | None = None,
) -> Verdict:
    """Full coarse-to-fine inference for one video.

    Judge transport failures raise :class:`~vidsentry.errors.JudgeError`
    (retriable); malformed judge output never raises — it degrades to a
    conservative Normal verdict with an explanatory flag.
    """
    sparse = sample_frames(video, cfg.sparse_fps)
    reply1 = judge.judge(
        [video.frames[i] for i in sparse], prompt, TurnKind.TURN_ONE, None, seed
    )
    outcome1 = _attempt_turn(reply1.raw_text, TurnKind.TURN_ONE, parse_mode, len(sparse))
    scalar = normality_reward(reply1.p_normal, reply1.p_abnormal)

    hull = _usable_hull(outcome1, cfg)
    if hull is None:
        flags = []
        if outcome1.response is None:
            flags.append("unparseable_turn_one")
        elif outcome1.response.status is Status.ABNORMAL:
            flags.append("invalid_turn_one_window")
        return Verdict(
            status=Status.NORMAL,
            scalar_reward=scalar,
            turn1=outcome1.response,
            flags=tuple(flags),
        )

    clip = crop_window(video, sparse, hull, cfg.dense_fps)
    assert outcome1.response is not None
    reply2 = judge.judge(
        clip.handles,
        prompt,
        TurnKind.TURN_TWO,
        serialize_turn(outcome1.response),
        _derive_seed(seed, 1),
    )
    outcome2 = _attempt_turn(
        reply2.raw_text, TurnKind.TURN_TWO, parse_mode, expected_clip_frames=len(clip)
    )
    scalar = normality_reward(reply2.p_normal, reply2.p_abnormal)

    flags = []
    evidence: tuple[EvidenceEntry, ...] = ()
    status = Status.NORMAL
    if outcome2.response is None:
        flags.append("unparseable_turn_two")
    elif outcome2.response.status is Status.ABNORMAL:
        evidence = _evidence(outcome2.response, clip)
        if evidence:
            status = Status.ABNORMAL
        else:
            flags.append("unconfirmed_second_turn")
    return Verdict(
        status=status,
        scalar_reward=scalar,
        turn1=outcome1.response,
        turn2=outcome2.response,
        window_source=clip.source_span,
        evidence=evidence,
        flags=tuple(flags),
    )


def build_rollout(
    video: VideoDescriptor,
    prompt: str,
    judge: JudgeBackend,
    cfg: SamplingConfig = DEFAULT_SAMPLING,
    parse_mode: str = "strict",
    seed: int | None = None,
) -> RolloutRecord:
    """One two-turn rollout for group scoring; terminates after turn one when
    that turn predicts Normal or yields no usable window."""
    sparse = sample_frames(video, cfg.sparse_fps)
    reply1 = judge.judge(
        [video.frames[i] for i in sparse], prompt, TurnKind.TURN_ONE, None, seed
    )
    outcome1 = _attempt_turn(reply1.raw_text, TurnKind.TURN_ONE, parse_mode, len(sparse))

    hull = _usable_hull(outcome1, cfg)
    if hull is None:
        return RolloutRecord(turn1=outcome1)

    clip = crop_window(video, sparse, hull, cfg.dense_fps)
    assert outcome1.response is not None
    reply2 = judge.judge(
        clip.handles,
        prompt,
        TurnKind.TURN_TWO,
        serialize_turn(outcome1.response),
        _derive_seed(seed, 1),
    )
    outcome2 = _attempt_turn(
        reply2.raw_text, TurnKind.TURN_TWO, parse_mode, expected_clip_frames=len(clip)
    )
    return RolloutRecord(
        turn1=outcome1,
        turn2=outcome2,
        window_source=clip.source_span,
        annotation_map=clip.annotation_map,
    )


def _map_ordered(
    fn: Callable[[int], U], count: int, workers: int
) -> list[U]:
    if workers <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=min(workers, count)) as pool:
        return list(pool.map(fn, range(count)))


def score_rollout_group(
    video: VideoDescriptor,
    gt: GroundTruth,
    judge: JudgeBackend,
    group_size: int,
    weights: RewardWeights = DEFAULT_WEIGHTS,
    cfg: SamplingConfig = DEFAULT_SAMPLING,
    parse_mode: str = "strict",
    seed: int | None = None,
    concurrency: int = 1,
    prompt: str = "",
) -> tuple[list[RolloutRecord], list[RewardBreakdown]]:
    """Sample and score a group of independent rollouts for one input.

    Each rollout is cropped along its own full predicted window, so the
    sampling config must not cap clip length here (the cap is an
    inference-path convenience; a clamped clip could not carry boxes for
    every matched frame and would break the spatial reward's contract).
    Judge errors abort the whole group; malformed outputs score through the
    format penalty instead.
    """
    if group_size < 2:
        raise DomainError(f"group scoring needs at least 2 rollouts, got {group_size}")
    if cfg.max_clip_seconds is not None:
        raise DomainError("rollout scoring requires an uncapped clip (max_clip_seconds unset)")
    workers = min(concurrency, getattr(judge, "max_concurrency", 1))

    def one(i: int) -> RolloutRecord:
        return build_rollout(video, prompt, judge, cfg, parse_mode, _derive_seed(seed, 2 * i))

    records = _map_ordered(one, group_size, workers)
    breakdowns = [aggregate_reward(record, gt, weights) for record in records]
    return records, breakdowns


def best_of_n(
    candidates: Sequence[VideoDescriptor],
    prompt: str,
    judge: JudgeBackend,
    cfg: SamplingConfig = DEFAULT_SAMPLING,
    parse_mode: str = "strict",
    seed: int | None = None,
    concurrency: int = 1,
) -> tuple[int, list[float]]:
    """Judge every candidate and pick the highest scalar reward (ties: lowest
    index). Returns the selected index and all scores."""
    if not candidates:
        raise DomainError("best_of_n needs at least one candidate")
    workers = min(concurrency, getattr(judge, "max_concurrency", 1))

    def one(i: int) -> float:
        verdict = run_two_turn(
            candidates[i], prompt, judge, cfg, parse_mode, _derive_seed(seed, 100 * i)
        )
        return verdict.scalar_reward

    scores = _map_ordered(one, len(candidates), workers)
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    return best, scores


def combine_rewards(score_lists: Sequence[Sequence[float]]) -> list[float]:
    """Min-max normalize each scorer's list over the candidate set, then
    average element-wise. Constant lists normalize to all-0.5."""
    if not score_lists:
        raise DomainError("combine_rewards needs at least one score list")
    length = len(score_lists[0])
    if any(len(lst) != length for lst in score_lists):
        raise DomainError("score lists must have equal lengths")
    if length == 0:
        return []

    normalized = []
    for lst in score_lists:
        lo, hi = min(lst), max(lst)
        if hi == lo:
            normalized.append([0.5] * length)
        else:
            normalized.append([(x - lo) / (hi - lo) for x in lst])
    return [sum(col) / len(normalized) for col in zip(*normalized)]

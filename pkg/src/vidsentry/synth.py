"""Deterministic synthetic test world.

Generates videos with planted, fully-known anomalies (payload handles encode
the frame index and planted flags, so oracle checks need no side channel) and
provides scripted judge backends: a perfect oracle, a seeded noisy oracle,
constant-answer judges, and malformed-output judges for robustness testing.
Everything is pure given its seed; identical seeds reproduce byte-identical
corpora and judge transcripts.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional, Sequence, Union

from . import sampling
from .annotations import AnnotationDocument, save_annotation_file
from .codec import (
    KEY_ANOMALIES,
    KEY_BBOX,
    KEY_COT,
    KEY_LABEL,
    KEY_REASON,
    KEY_REGION,
    KEY_STATUS,
    KEY_TIME_REGION,
    TurnKind,
)
from .domain import (
    COORD_MAX,
    DEFAULT_ANNOTATION_FPS,
    AnomalyAnnotation,
    AnomalyType,
    Basis,
    BBox,
    FrameSpan,
    GroundTruth,
    SaliencyLabel,
    Status,
    VideoDescriptor,
)
from .errors import DomainError
from .orchestrator import JudgeReply

MALFORMED_MODES = ("fenced", "truncated", "wrong_key", "frame_gap")


@dataclass(frozen=True)
class PlannedAnomaly:
    """One planted anomaly: a source-frame span plus a drifting box."""

    type: AnomalyType
    source_start: int
    source_end: int
    base_box: BBox
    drift: tuple[int, int] = (0, 0)
    saliency: SaliencyLabel = SaliencyLabel.SALIENT
    reason: str = "planted synthetic defect"

    def covers(self, source_index: int) -> bool:
        return self.source_start <= source_index <= self.source_end

    def box_at(self, source_index: int) -> BBox:
        """Box on a source frame: the base box shifted along the drift vector,
        clamped inside the coordinate range with its size preserved."""
        t = min(max(source_index, self.source_start), self.source_end) - self.source_start
        w = self.base_box.xmax - self.base_box.xmin
        h = self.base_box.ymax - self.base_box.ymin
        x0 = min(max(self.base_box.xmin + self.drift[0] * t, 0), COORD_MAX - w)
        y0 = min(max(self.base_box.ymin + self.drift[1] * t, 0), COORD_MAX - h)
        return BBox(x0, y0, x0 + w, y0 + h)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic video; an empty plan means a normal video."""

    video_id: str
    seed: int
    duration_seconds: float
    source_fps: float
    plan: tuple[PlannedAnomaly, ...] = ()

    @property
    def frame_count(self) -> int:
        return max(1, round(self.duration_seconds * self.source_fps))

    def to_dict(self) -> dict[str, Any]:
        return {
            "video_id": self.video_id,
            "seed": self.seed,
            "duration_seconds": self.duration_seconds,
            "source_fps": self.source_fps,
            "plan": [
                {
                    "type": p.type.label,
                    "source_start": p.source_start,
                    "source_end": p.source_end,
                    "base_box": list(p.base_box.as_tuple()),
                    "drift": list(p.drift),
                    "saliency": p.saliency.value,
                    "reason": p.reason,
                }
                for p in self.plan
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "SynthSpec":
        from .domain import parse_taxonomy_label

        return cls(
            video_id=obj["video_id"],
            seed=obj["seed"],
            duration_seconds=obj["duration_seconds"],
            source_fps=obj["source_fps"],
            plan=tuple(
                PlannedAnomaly(
                    type=parse_taxonomy_label(p["type"]),
                    source_start=p["source_start"],
                    source_end=p["source_end"],
                    base_box=BBox(*p["base_box"]),
                    drift=tuple(p["drift"]),
                    saliency=SaliencyLabel(p["saliency"]),
                    reason=p["reason"],
                )
                for p in obj.get("plan", [])
            ),
        )


def frame_handle(video_id: str, source_index: int, plan_flags: Sequence[int] = ()) -> str:
    handle = f"synth://{video_id}/{source_index}"
    if plan_flags:
        handle += "?plan=" + ",".join(str(i) for i in plan_flags)
    return handle


def parse_handle(handle: str) -> tuple[str, int]:
    """Recover (video_id, source_index) from a synthetic payload handle."""
    if not handle.startswith("synth://"):
        raise DomainError(f"not a synthetic handle: {handle!r}")
    body = handle[len("synth://"):].split("?", 1)[0]
    video_id, _, idx = body.rpartition("/")
    return video_id, int(idx)


def generate_video(
    spec: SynthSpec, annotation_fps: float = DEFAULT_ANNOTATION_FPS
) -> tuple[VideoDescriptor, GroundTruth]:
    """Materialize a spec into a descriptor plus exactly-derived ground truth.

    Ground-truth spans live on the sparse annotation basis; every annotated
    frame carries the planted box evaluated at that frame's source index.

    Raises:
        DomainError: if a planted span is outside the video or never lands on
            an annotation frame (such an anomaly would be unobservable).
    """
    frame_count = spec.frame_count
    sparse = sampling.sample_indices(frame_count, spec.source_fps, annotation_fps)

    anomalies = []
    for i, plan in enumerate(spec.plan):
        if not (0 <= plan.source_start <= plan.source_end < frame_count):
            raise DomainError(
                f"{spec.video_id}: planted span [{plan.source_start}, {plan.source_end}] "
                f"outside {frame_count}-frame video"
            )
        if not plan.base_box.is_valid():
            raise DomainError(f"{spec.video_id}: invalid planted box {plan.base_box}")
        positions = [p for p, src in enumerate(sparse) if plan.covers(src)]
        if not positions:
            raise DomainError(
                f"{spec.video_id}: planted span [{plan.source_start}, {plan.source_end}] "
                "misses every annotation frame"
            )
        anomalies.append(
            AnomalyAnnotation(
                type=plan.type,
                span=FrameSpan(positions[0], positions[-1], Basis.SPARSE),
                reason=plan.reason,
                boxes={p: (plan.box_at(sparse[p]),) for p in positions},
                saliency=plan.saliency,
            )
        )

    frames = []
    for src in range(frame_count):
        flags = [i for i, plan in enumerate(spec.plan) if plan.covers(src)]
        frames.append(frame_handle(spec.video_id, src, flags))

    video = VideoDescriptor(
        id=spec.video_id,
        frame_count=frame_count,
        source_fps=spec.source_fps,
        frames=tuple(frames),
    )
    gt = GroundTruth(
        video_id=spec.video_id,
        status=Status.ABNORMAL if anomalies else Status.NORMAL,
        anomalies=tuple(anomalies),
    )
    return video, gt


_ALL_TYPES = tuple(AnomalyType)


def random_spec(
    video_id: str,
    rng: random.Random,
    abnormal: bool,
    annotation_fps: float = DEFAULT_ANNOTATION_FPS,
    forced_type: AnomalyType | None = None,
) -> SynthSpec:
    """Seeded random video recipe; abnormal ones plant 1-2 visible anomalies."""
    duration = rng.choice([3.0, 4.0, 5.0, 6.0, 8.0])
    fps = rng.choice([24.0, 30.0])
    spec = SynthSpec(
        video_id=video_id,
        seed=rng.randrange(2**31),
        duration_seconds=duration,
        source_fps=fps,
        plan=(),
    )
    if not abnormal:
        return spec

    sparse = sampling.sample_indices(spec.frame_count, fps, annotation_fps)
    plans = []
    for k in range(rng.choice([1, 1, 2])):
        p0 = rng.randrange(len(sparse))
        p1 = min(len(sparse) - 1, p0 + rng.randrange(0, 5))
        size = rng.randrange(80, 320)
        x0 = rng.randrange(0, COORD_MAX - size)
        y0 = rng.randrange(0, COORD_MAX - size)
        atype = forced_type if (forced_type and k == 0) else rng.choice(_ALL_TYPES)
        plans.append(
            PlannedAnomaly(
                type=atype,
                source_start=sparse[p0],
                source_end=sparse[p1],
                base_box=BBox(x0, y0, x0 + size, y0 + size),
                drift=(rng.randrange(-3, 4), rng.randrange(-3, 4)),
                saliency=rng.choice((SaliencyLabel.SALIENT, SaliencyLabel.NON_SALIENT)),
                reason=f"planted {atype.label.lower()} #{k}",
            )
        )
    return replace(spec, plan=tuple(plans))


class SynthWorld:
    """A generated corpus: specs, descriptors, and ground truths by video id."""

    def __init__(self, specs: Sequence[SynthSpec], annotation_fps: float = DEFAULT_ANNOTATION_FPS):
        self.annotation_fps = annotation_fps
        self.specs: dict[str, SynthSpec] = {}
        self._videos: dict[str, VideoDescriptor] = {}
        self._gts: dict[str, GroundTruth] = {}
        for spec in specs:
            if spec.video_id in self.specs:
                raise DomainError(f"duplicate video id {spec.video_id!r}")
            video, gt = generate_video(spec, annotation_fps)
            self.specs[spec.video_id] = spec
            self._videos[spec.video_id] = video
            self._gts[spec.video_id] = gt

    @property
    def ids(self) -> list[str]:
        return list(self.specs)

    def spec(self, video_id: str) -> SynthSpec:
        self._check(video_id)
        return self.specs[video_id]

    def video(self, video_id: str) -> VideoDescriptor:
        self._check(video_id)
        return self._videos[video_id]

    def ground_truth(self, video_id: str) -> GroundTruth:
        self._check(video_id)
        return self._gts[video_id]

    def _check(self, video_id: str) -> None:
        if video_id not in self.specs:
            raise DomainError(f"unknown video id {video_id!r}")

    def annotation_document(self, video_id: str) -> AnnotationDocument:
        video = self.video(video_id)
        return AnnotationDocument(
            video_id=video_id,
            frame_count=video.frame_count,
            source_fps=video.source_fps,
            ground_truth=self.ground_truth(video_id),
        )

    def save(self, out_dir: Union[str, Path]) -> Path:
        """Write one annotation file per video plus a manifest embedding the
        generation recipes (handles are reconstructible, never stored)."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for video_id in self.specs:
            save_annotation_file(self.annotation_document(video_id), out / f"{video_id}.json")
        manifest = {
            "annotation_fps": self.annotation_fps,
            "videos": [self.specs[v].to_dict() for v in self.specs],
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        return out

    @classmethod
    def load(cls, in_dir: Union[str, Path]) -> "SynthWorld":
        manifest = json.loads((Path(in_dir) / "manifest.json").read_text(encoding="utf-8"))
        return cls(
            [SynthSpec.from_dict(obj) for obj in manifest["videos"]],
            annotation_fps=manifest.get("annotation_fps", DEFAULT_ANNOTATION_FPS),
        )


def generate_corpus(
    seed: int,
    normal: int,
    abnormal: int,
    annotation_fps: float = DEFAULT_ANNOTATION_FPS,
) -> SynthWorld:
    """Balanced seeded corpus; abnormal videos cycle through all five types."""
    rng = random.Random(seed)
    specs = []
    for i in range(normal):
        specs.append(random_spec(f"normal-{i:04d}", rng, abnormal=False, annotation_fps=annotation_fps))
    for i in range(abnormal):
        specs.append(
            random_spec(
                f"abnormal-{i:04d}",
                rng,
                abnormal=True,
                annotation_fps=annotation_fps,
                forced_type=_ALL_TYPES[i % len(_ALL_TYPES)],
            )
        )
    return SynthWorld(specs, annotation_fps)


def bucket_spec(
    video_id: str,
    seed: int,
    short_duration: bool,
    small_extent: bool,
    annotation_fps: float = DEFAULT_ANNOTATION_FPS,
) -> SynthSpec:
    """Spec landing in one difficulty bucket of the hard split.

    Short anomalies span at most 3 annotation frames (< 1 s at 4 fps); long
    ones span at least 4. Small extents stay under 20% of the frame area.
    """
    rng = random.Random(seed)
    fps = 24.0
    spec = SynthSpec(
        video_id=video_id, seed=seed, duration_seconds=5.0, source_fps=fps, plan=()
    )
    sparse = sampling.sample_indices(spec.frame_count, fps, annotation_fps)
    span_frames = rng.choice([1, 2, 3]) if short_duration else rng.choice([4, 6, 8])
    p0 = rng.randrange(0, len(sparse) - span_frames + 1)
    p1 = p0 + span_frames - 1
    size = rng.choice([220, 300, 380]) if small_extent else rng.choice([500, 600, 700])
    x0 = rng.randrange(0, COORD_MAX - size)
    y0 = rng.randrange(0, COORD_MAX - size)
    plan = PlannedAnomaly(
        type=rng.choice(_ALL_TYPES),
        source_start=sparse[p0],
        source_end=sparse[p1],
        base_box=BBox(x0, y0, x0 + size, y0 + size),
        saliency=SaliencyLabel.SALIENT,
        reason="bucketed planted defect",
    )
    return replace(spec, plan=(plan,))


# ---------------------------------------------------------------------------
# Scripted judges


@dataclass(frozen=True)
class JudgeScript:
    """Recipe for a scripted judge backend."""

    behavior: str  # perfect | noisy | always_normal | always_abnormal | malformed
    seed: int = 0
    flip_prob: float = 0.0
    window_jitter: int = 0
    box_jitter: int = 0
    malformed_mode: str = "fenced"


def _scan_cot(n_frames: int) -> str:
    return " ".join(f"Frame {i}: examined." for i in range(n_frames))


def _normal_obj(n_frames: int) -> dict[str, Any]:
    return {KEY_COT: _scan_cot(n_frames), KEY_STATUS: "normal", KEY_ANOMALIES: []}


class _ScriptedBase:
    """Shared plumbing: resolve the synthetic world entry behind the handles."""

    max_concurrency = 16

    def __init__(self, world: SynthWorld, seed: int = 0):
        self.world = world
        self.seed = seed

    def _resolve(self, frames: Sequence[str]) -> tuple[SynthSpec, list[int]]:
        if not frames:
            raise DomainError("judge called with no frames")
        video_id, _ = parse_handle(frames[0])
        spec = self.world.spec(video_id)
        return spec, [parse_handle(h)[1] for h in frames]

    def _rng(self, spec: SynthSpec, turn: TurnKind, seed: Optional[int]) -> random.Random:
        return random.Random(f"{self.seed}:{seed}:{spec.video_id}:{turn.value}")


def _perfect_obj(spec: SynthSpec, shown: list[int], turn: TurnKind) -> dict[str, Any]:
    """The schema-perfect response for the frames actually shown."""
    visible = [
        (i, plan)
        for i, plan in enumerate(spec.plan)
        if any(plan.covers(src) for src in shown)
    ]
    if not visible:
        return _normal_obj(len(shown))

    entries = []
    for i, plan in visible:
        entry: dict[str, Any] = {}
        if turn is TurnKind.TURN_ONE:
            positions = [k for k, src in enumerate(shown) if plan.covers(src)]
            entry[KEY_TIME_REGION] = f"Frame {positions[0]} - Frame {positions[-1]}"
        entry[KEY_LABEL] = plan.type.label
        entry[KEY_REASON] = plan.reason
        entry[KEY_REGION] = f"planted region #{i}"
        if turn is TurnKind.TURN_TWO:
            entry[KEY_BBOX] = {
                f"Frame {k}": list(plan.box_at(src).as_tuple()) for k, src in enumerate(shown)
            }
        entries.append(entry)
    return {KEY_COT: _scan_cot(len(shown)), KEY_STATUS: "abnormal", KEY_ANOMALIES: entries}


def _reply(obj: dict[str, Any]) -> JudgeReply:
    abnormal = obj[KEY_STATUS] == "abnormal"
    return JudgeReply(
        raw_text=json.dumps(obj, ensure_ascii=False),
        p_normal=0.01 if abnormal else 0.99,
        p_abnormal=0.99 if abnormal else 0.01,
    )


class PerfectOracleJudge(_ScriptedBase):
    """Emits schema-perfect responses that match the planted ground truth."""

    def judge(self, frames, prompt, turn, prior_cot=None, seed=None) -> JudgeReply:
        spec, shown = self._resolve(frames)
        return _reply(_perfect_obj(spec, shown, turn))


class NoisyOracleJudge(_ScriptedBase):
    """Perfect oracle with seeded perturbations: status flips, window jitter,
    and box jitter. All-zero parameters reproduce the perfect oracle exactly."""

    def __init__(self, world, seed=0, flip_prob=0.0, window_jitter=0, box_jitter=0):
        super().__init__(world, seed)
        self.flip_prob = flip_prob
        self.window_jitter = window_jitter
        self.box_jitter = box_jitter

    def _jitter_box(self, coords: list[int], rng: random.Random) -> list[int]:
        j = self.box_jitter
        x0, y0, x1, y1 = (c + rng.randint(-j, j) for c in coords)
        x0 = min(max(x0, 0), COORD_MAX - 1)
        y0 = min(max(y0, 0), COORD_MAX - 1)
        x1 = min(max(x1, x0 + 1), COORD_MAX)
        y1 = min(max(y1, y0 + 1), COORD_MAX)
        return [x0, y0, x1, y1]

    def judge(self, frames, prompt, turn, prior_cot=None, seed=None) -> JudgeReply:
        spec, shown = self._resolve(frames)
        rng = self._rng(spec, turn, seed)
        obj = _perfect_obj(spec, shown, turn)

        if self.flip_prob > 0 and rng.random() < self.flip_prob:
            if obj[KEY_STATUS] == "abnormal":
                obj = _normal_obj(len(shown))
            else:
                obj = _fabricated_obj(len(shown), turn)

        if obj[KEY_STATUS] == "abnormal":
            last = len(shown) - 1
            for entry in obj[KEY_ANOMALIES]:
                if self.window_jitter > 0 and KEY_TIME_REGION in entry:
                    a, b = _span_of(entry[KEY_TIME_REGION])
                    a = min(max(a + rng.randint(-self.window_jitter, self.window_jitter), 0), last)
                    b = min(max(b + rng.randint(-self.window_jitter, self.window_jitter), a), last)
                    entry[KEY_TIME_REGION] = f"Frame {a} - Frame {b}"
                if self.box_jitter > 0 and KEY_BBOX in entry:
                    entry[KEY_BBOX] = {
                        key: self._jitter_box(coords, rng)
                        for key, coords in entry[KEY_BBOX].items()
                    }
        return _reply(obj)


def _span_of(text: str) -> tuple[int, int]:
    nums = [int(tok) for tok in text.replace("Frame", " ").replace("-", " ").split()]
    return nums[0], nums[-1]


def _fabricated_obj(n_frames: int, turn: TurnKind) -> dict[str, Any]:
    """A well-formed abnormal response with no grounding in the video."""
    entry: dict[str, Any] = {}
    if turn is TurnKind.TURN_ONE:
        entry[KEY_TIME_REGION] = f"Frame 0 - Frame {n_frames - 1}"
    entry[KEY_LABEL] = AnomalyType.OBJECT_DISTORTION.label
    entry[KEY_REASON] = "suspected structural defect"
    entry[KEY_REGION] = "whole frame"
    if turn is TurnKind.TURN_TWO:
        entry[KEY_BBOX] = {f"Frame {k}": [0, 0, COORD_MAX, COORD_MAX] for k in range(n_frames)}
    return {KEY_COT: _scan_cot(n_frames), KEY_STATUS: "abnormal", KEY_ANOMALIES: [entry]}


class AlwaysNormalJudge(_ScriptedBase):
    def judge(self, frames, prompt, turn, prior_cot=None, seed=None) -> JudgeReply:
        self._resolve(frames)
        return _reply(_normal_obj(len(frames)))


class AlwaysAbnormalJudge(_ScriptedBase):
    def judge(self, frames, prompt, turn, prior_cot=None, seed=None) -> JudgeReply:
        self._resolve(frames)
        return _reply(_fabricated_obj(len(frames), turn))


class MalformedJudge(_ScriptedBase):
    """Corrupts the perfect oracle's output in one of four documented ways."""

    def __init__(self, world, seed=0, mode="fenced"):
        super().__init__(world, seed)
        if mode not in MALFORMED_MODES:
            raise DomainError(f"unknown malformed mode {mode!r}; choose from {MALFORMED_MODES}")
        self.mode = mode

    def judge(self, frames, prompt, turn, prior_cot=None, seed=None) -> JudgeReply:
        spec, shown = self._resolve(frames)
        obj = _perfect_obj(spec, shown, turn)
        if self.mode == "frame_gap" and turn is TurnKind.TURN_TWO:
            for entry in obj[KEY_ANOMALIES]:
                bbox = entry.get(KEY_BBOX)
                if bbox and len(bbox) > 1:
                    bbox.pop(sorted(bbox, key=lambda k: _span_of(k)[0])[-1])
        text = json.dumps(obj, ensure_ascii=False)
        if self.mode == "fenced":
            text = f"```json\n{text}\n```"
        elif self.mode == "truncated":
            text = text[: max(1, int(len(text) * 0.6))]
        elif self.mode == "wrong_key":
            text = text.replace(f'"{KEY_STATUS}"', '"Status"', 1)
        base = _reply(obj)
        return JudgeReply(raw_text=text, p_normal=base.p_normal, p_abnormal=base.p_abnormal)


def scripted_judge(script: JudgeScript, world: SynthWorld):
    """Build a judge backend from a script; unknown behaviors are errors."""
    if script.behavior == "perfect":
        return PerfectOracleJudge(world, script.seed)
    if script.behavior == "noisy":
        return NoisyOracleJudge(
            world,
            script.seed,
            flip_prob=script.flip_prob,
            window_jitter=script.window_jitter,
            box_jitter=script.box_jitter,
        )
    if script.behavior == "always_normal":
        return AlwaysNormalJudge(world, script.seed)
    if script.behavior == "always_abnormal":
        return AlwaysAbnormalJudge(world, script.seed)
    if script.behavior == "malformed":
        return MalformedJudge(world, script.seed, mode=script.malformed_mode)
    raise DomainError(f"unknown judge behavior {script.behavior!r}")


def load_world(path: Union[str, Path]) -> SynthWorld:
    """Load a corpus directory produced by :meth:`SynthWorld.save`."""
    return SynthWorld.load(path)


__all__ = [
    "AlwaysAbnormalJudge",
    "AlwaysNormalJudge",
    "JudgeScript",
    "MalformedJudge",
    "NoisyOracleJudge",
    "PerfectOracleJudge",
    "PlannedAnomaly",
    "SynthSpec",
    "SynthWorld",
    "bucket_spec",
    "frame_handle",
    "generate_corpus",
    "generate_video",
    "load_world",
    "parse_handle",
    "random_spec",
    "scripted_judge",
]

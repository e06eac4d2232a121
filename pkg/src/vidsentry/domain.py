"""Core domain types: videos, ground-truth annotations, the anomaly taxonomy,
and the geometric/set primitives everything downstream scores with.

All types are immutable values and all operations are pure functions, so the
module is safe for unrestricted parallel use.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

from . import _kernels, sampling
from .errors import DomainError

Rate = Union[int, float, Fraction]

COORD_MAX = 1000  # box coordinates are normalized to [0, 1000] per axis
DEFAULT_ANNOTATION_FPS = 4.0  # annotations live on the sparse-sampled sequence


class Status(enum.Enum):
    NORMAL = "normal"
    ABNORMAL = "abnormal"


class AnomalyType(enum.Enum):
    """The five-way anomaly taxonomy."""

    OBJECT_DISTORTION = "Object Distortion"
    HUMAN_DISTORTION = "Human Distortion"
    MOTION_ANOMALY = "Motion Anomalies"
    PHYSICAL_VIOLATION = "Physical Violations"
    CHARACTER_ANOMALY = "Character Anomalies"

    @property
    def label(self) -> str:
        return self.value


# Singular/plural + case-folding aliases; anything else is rejected.
_TAXONOMY_ALIASES: dict[str, AnomalyType] = {}
for _t, _stems in [
    (AnomalyType.OBJECT_DISTORTION, ("object distortion", "object distortions")),
    (AnomalyType.HUMAN_DISTORTION, ("human distortion", "human distortions")),
    (AnomalyType.MOTION_ANOMALY, ("motion anomaly", "motion anomalies")),
    (AnomalyType.PHYSICAL_VIOLATION, ("physical violation", "physical violations")),
    (AnomalyType.CHARACTER_ANOMALY, ("character anomaly", "character anomalies")),
]:
    for _s in _stems:
        _TAXONOMY_ALIASES[_s] = _t
del _t, _stems, _s


def parse_taxonomy_label(text: str) -> AnomalyType:
    """Resolve a taxonomy label, tolerating case and internal whitespace.

    Raises:
        DomainError: if the label is not one of the five categories.
    """
    if not isinstance(text, str):
        raise DomainError(f"taxonomy label must be a string, got {type(text).__name__}")
    key = " ".join(text.split()).lower()
    try:
        return _TAXONOMY_ALIASES[key]
    except KeyError:
        raise DomainError(f"unknown anomaly type: {text!r}") from None


class SaliencyLabel(enum.Enum):
    SALIENT = "salient"
    NON_SALIENT = "non_salient"


_SALIENCY_DISCOUNT = {SaliencyLabel.SALIENT: 1.0, SaliencyLabel.NON_SALIENT: 0.5}


def saliency_discount(label: SaliencyLabel) -> float:
    """Discount factor: 1.0 for salient anomalies, 0.5 for non-salient ones."""
    return _SALIENCY_DISCOUNT[label]


class Basis(enum.Enum):
    """Which frame sequence a frame index refers to."""

    SOURCE = "source"
    SPARSE = "sparse"  # the sparse-sampled annotation sequence
    CLIP = "clip"  # a cropped clip, re-indexed from 0


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, integer xyxy coordinates normalized to [0, 1000].

    Construction does not validate, so corrupt annotations stay representable
    and reportable; call :meth:`violations` or go through ``bbox_iou``.
    """

    xmin: int
    ymin: int
    xmax: int
    ymax: int

    def violations(self) -> list[str]:
        out = []
        for v in (self.xmin, self.ymin, self.xmax, self.ymax):
            if not isinstance(v, int):
                out.append(f"non-integer coordinate {v!r}")
        if out:
            return out
        if not (0 <= self.xmin < self.xmax <= COORD_MAX):
            out.append(f"x bounds must satisfy 0 <= xmin < xmax <= {COORD_MAX}: ({self.xmin}, {self.xmax})")
        if not (0 <= self.ymin < self.ymax <= COORD_MAX):
            out.append(f"y bounds must satisfy 0 <= ymin < ymax <= {COORD_MAX}: ({self.ymin}, {self.ymax})")
        return out

    def is_valid(self) -> bool:
        return not self.violations()

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


def bbox_iou(a: BBox, b: BBox) -> float:
    """Continuous-area IoU of two valid boxes; 0 when disjoint.

    Raises:
        DomainError: if either box violates its invariants (degenerate boxes
            signal corruption and are not scored as IoU 0).
    """
    for name, box in (("a", a), ("b", b)):
        problems = box.violations()
        if problems:
            raise DomainError(f"invalid box {name}={box}: {'; '.join(problems)}")
    return _kernels.box_iou_xyxy(
        a.xmin, a.ymin, a.xmax, a.ymax, b.xmin, b.ymin, b.xmax, b.ymax
    )


@dataclass(frozen=True)
class FrameSpan:
    """Inclusive frame-index range on a named sequence basis."""

    start: int
    end: int
    basis: Basis = Basis.SPARSE

    def __len__(self) -> int:
        return self.end - self.start + 1

    def indices(self) -> range:
        return range(self.start, self.end + 1)

    def violations(self, sequence_length: int | None = None) -> list[str]:
        out = []
        if not (isinstance(self.start, int) and isinstance(self.end, int)):
            return [f"non-integer span bounds ({self.start!r}, {self.end!r})"]
        if self.start < 0:
            out.append(f"span start {self.start} < 0")
        if self.start > self.end:
            out.append(f"span start {self.start} > end {self.end}")
        if sequence_length is not None and self.end >= sequence_length:
            out.append(f"span end {self.end} outside sequence of length {sequence_length}")
        return out


def frame_set(spans: Iterable[FrameSpan]) -> set[int]:
    """Union of inclusive frame ranges; all spans must share a basis."""
    out: set[int] = set()
    basis: Basis | None = None
    for span in spans:
        if basis is None:
            basis = span.basis
        elif span.basis is not basis:
            raise DomainError(f"mixed span bases: {basis.value} vs {span.basis.value}")
        out.update(span.indices())
    return out


@dataclass(frozen=True)
class VideoDescriptor:
    """A video as the engine sees it: metadata plus opaque per-frame handles.

    The engine never decodes pixels; handles are pass-through tokens.
    """

    id: str
    frame_count: int
    source_fps: float
    frames: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.frame_count < 1:
            raise DomainError(f"frame_count must be >= 1, got {self.frame_count}")
        if self.source_fps <= 0:
            raise DomainError(f"source_fps must be positive, got {self.source_fps}")
        if len(self.frames) != self.frame_count:
            raise DomainError(
                f"{len(self.frames)} frame handles for frame_count={self.frame_count}"
            )

    def annotation_length(self, annotation_fps: Rate = DEFAULT_ANNOTATION_FPS) -> int:
        """Length of the sparse-sampled sequence annotations are indexed on."""
        return sampling.sampled_length(self.frame_count, self.source_fps, annotation_fps)


@dataclass(frozen=True)
class AnomalyAnnotation:
    """One ground-truth anomaly: taxonomy label, sparse-basis frame span,
    free-text reason, per-frame boxes (keys within the span), saliency tag."""

    type: AnomalyType
    span: FrameSpan
    reason: str
    boxes: Mapping[int, tuple[BBox, ...]] = field(default_factory=dict)
    saliency: SaliencyLabel = SaliencyLabel.SALIENT


@dataclass(frozen=True)
class GroundTruth:
    """Per-video ground truth; status is Normal iff the anomaly list is empty."""

    video_id: str
    status: Status
    anomalies: tuple[AnomalyAnnotation, ...] = ()

    def type_set(self) -> set[AnomalyType]:
        return {a.type for a in self.anomalies}

    def frame_set(self) -> set[int]:
        return frame_set(a.span for a in self.anomalies)

    def mean_saliency_discount(self) -> float:
        """Mean discount over anomalies; 1.0 for normal ground truth."""
        if not self.anomalies:
            return 1.0
        return sum(saliency_discount(a.saliency) for a in self.anomalies) / len(self.anomalies)


@dataclass(frozen=True)
class Violation:
    """One structural problem found by a validator. Violations are data."""

    code: str
    message: str
    path: str = ""

    def __str__(self) -> str:
        where = f" at {self.path}" if self.path else ""
        return f"[{self.code}]{where}: {self.message}"


def validate_ground_truth(
    gt: GroundTruth,
    video: VideoDescriptor,
    annotation_fps: Rate = DEFAULT_ANNOTATION_FPS,
) -> list[Violation]:
    """Check every ground-truth invariant against a video's annotation basis.

    Returns structured violation records; an empty list means valid. Never
    raises on bad data.
    """
    out: list[Violation] = []
    if gt.video_id != video.id:
        out.append(Violation("ID_MISMATCH", f"ground truth {gt.video_id!r} vs video {video.id!r}"))

    empty = not gt.anomalies
    if (gt.status is Status.NORMAL) != empty:
        out.append(
            Violation(
                "STATUS_MISMATCH",
                f"status={gt.status.value} with {len(gt.anomalies)} anomalies "
                "(normal iff the anomaly list is empty)",
            )
        )

    seq_len = video.annotation_length(annotation_fps)
    for i, anomaly in enumerate(gt.anomalies):
        path = f"anomalies[{i}]"
        if not isinstance(anomaly.type, AnomalyType):
            out.append(Violation("BAD_TYPE", f"unknown taxonomy member {anomaly.type!r}", path))
        if not isinstance(anomaly.saliency, SaliencyLabel):
            out.append(Violation("BAD_SALIENCY", f"unknown saliency {anomaly.saliency!r}", path))
        if anomaly.span.basis is not Basis.SPARSE:
            out.append(
                Violation(
                    "BAD_BASIS",
                    f"annotation spans live on the sparse basis, got {anomaly.span.basis.value}",
                    f"{path}.span",
                )
            )
        for problem in anomaly.span.violations(seq_len):
            out.append(Violation("SPAN_RANGE", problem, f"{path}.span"))
        span_ok = not anomaly.span.violations()
        for frame, boxes in sorted(anomaly.boxes.items()):
            box_path = f"{path}.boxes[{frame}]"
            if span_ok and not (anomaly.span.start <= frame <= anomaly.span.end):
                out.append(
                    Violation(
                        "BOX_OUTSIDE_SPAN",
                        f"frame {frame} outside span [{anomaly.span.start}, {anomaly.span.end}]",
                        box_path,
                    )
                )
            for j, box in enumerate(boxes):
                for problem in box.violations():
                    out.append(Violation("BAD_BOX", problem, f"{box_path}[{j}]"))
    return out


def union_area(boxes: Sequence[BBox]) -> float:
    """Exact area of the union of axis-aligned boxes (coordinate compression)."""
    rects = [b for b in boxes if b.is_valid()]
    if not rects:
        return 0.0
    xs = sorted({v for b in rects for v in (b.xmin, b.xmax)})
    ys = sorted({v for b in rects for v in (b.ymin, b.ymax)})
    area = 0.0
    for i in range(len(xs) - 1):
        cx = (xs[i] + xs[i + 1]) / 2
        width = xs[i + 1] - xs[i]
        for j in range(len(ys) - 1):
            cy = (ys[j] + ys[j + 1]) / 2
            if any(b.xmin <= cx <= b.xmax and b.ymin <= cy <= b.ymax for b in rects):
                area += width * (ys[j + 1] - ys[j])
    return area

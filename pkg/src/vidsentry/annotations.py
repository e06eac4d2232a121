"""Annotation-file I/O: one JSON document per video.

Normative keys: ``video_id``, ``frame_count``, ``source_fps``, ``status``
("normal" | "abnormal"), ``anomalies``: array of {``type``, ``start_frame``,
``end_frame``, ``reason``, ``saliency`` ("salient" | "non_salient"),
``boxes``: object mapping decimal frame-index strings to arrays of 4-integer
arrays}. Unknown keys are ignored with a warning.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Union

from .domain import (
    DEFAULT_ANNOTATION_FPS,
    AnomalyAnnotation,
    Basis,
    BBox,
    FrameSpan,
    GroundTruth,
    Rate,
    SaliencyLabel,
    Status,
    Violation,
    VideoDescriptor,
    parse_taxonomy_label,
    validate_ground_truth,
)
from .errors import DomainError

log = logging.getLogger(__name__)

_DOC_KEYS = {"video_id", "frame_count", "source_fps", "status", "anomalies"}
_ANOMALY_KEYS = {"type", "start_frame", "end_frame", "reason", "saliency", "boxes"}


@dataclass(frozen=True)
class AnnotationDocument:
    """Parsed annotation file: video metadata plus ground truth."""

    video_id: str
    frame_count: int
    source_fps: float
    ground_truth: GroundTruth

    def video(self, frames: tuple[str, ...] | None = None) -> VideoDescriptor:
        """Build a descriptor; synthesizes placeholder handles when none given."""
        if frames is None:
            frames = tuple(f"{self.video_id}/frame/{i}" for i in range(self.frame_count))
        return VideoDescriptor(
            id=self.video_id,
            frame_count=self.frame_count,
            source_fps=self.source_fps,
            frames=frames,
        )


def _warn_unknown(obj: Mapping[str, Any], known: set[str], where: str) -> None:
    for key in obj:
        if key not in known:
            log.warning("ignoring unknown key %r in %s", key, where)


def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in obj:
        raise DomainError(f"{where}: missing required key {key!r}")
    return obj[key]


def _parse_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise DomainError(f"{where}: expected an integer, got {value!r}")
    return value


def parse_annotation(obj: Mapping[str, Any], where: str = "annotation") -> AnnotationDocument:
    """Parse one annotation document from decoded JSON."""
    if not isinstance(obj, Mapping):
        raise DomainError(f"{where}: document must be a JSON object")
    _warn_unknown(obj, _DOC_KEYS, where)

    video_id = _require(obj, "video_id", where)
    if not isinstance(video_id, str) or not video_id:
        raise DomainError(f"{where}: video_id must be a non-empty string")
    frame_count = _parse_int(_require(obj, "frame_count", where), f"{where}.frame_count")
    source_fps = _require(obj, "source_fps", where)
    if not isinstance(source_fps, (int, float)) or isinstance(source_fps, bool):
        raise DomainError(f"{where}.source_fps: expected a number, got {source_fps!r}")

    status_raw = _require(obj, "status", where)
    try:
        status = Status(status_raw)
    except ValueError:
        raise DomainError(f"{where}.status: expected 'normal' or 'abnormal', got {status_raw!r}") from None

    anomalies_raw = _require(obj, "anomalies", where)
    if not isinstance(anomalies_raw, list):
        raise DomainError(f"{where}.anomalies: expected an array")

    anomalies = []
    for i, entry in enumerate(anomalies_raw):
        entry_where = f"{where}.anomalies[{i}]"
        if not isinstance(entry, Mapping):
            raise DomainError(f"{entry_where}: expected an object")
        _warn_unknown(entry, _ANOMALY_KEYS, entry_where)
        atype = parse_taxonomy_label(_require(entry, "type", entry_where))
        start = _parse_int(_require(entry, "start_frame", entry_where), f"{entry_where}.start_frame")
        end = _parse_int(_require(entry, "end_frame", entry_where), f"{entry_where}.end_frame")
        reason = entry.get("reason", "")
        if not isinstance(reason, str):
            raise DomainError(f"{entry_where}.reason: expected a string")
        saliency_raw = _require(entry, "saliency", entry_where)
        try:
            saliency = SaliencyLabel(saliency_raw)
        except ValueError:
            raise DomainError(
                f"{entry_where}.saliency: expected 'salient' or 'non_salient', got {saliency_raw!r}"
            ) from None

        boxes_raw = entry.get("boxes", {})
        if not isinstance(boxes_raw, Mapping):
            raise DomainError(f"{entry_where}.boxes: expected an object")
        boxes: dict[int, tuple[BBox, ...]] = {}
        for frame_key, box_list in boxes_raw.items():
            try:
                frame = int(frame_key)
            except (TypeError, ValueError):
                raise DomainError(
                    f"{entry_where}.boxes: frame keys must be decimal strings, got {frame_key!r}"
                ) from None
            if not isinstance(box_list, list):
                raise DomainError(f"{entry_where}.boxes[{frame_key}]: expected an array of boxes")
            parsed = []
            for j, coords in enumerate(box_list):
                if not isinstance(coords, list) or len(coords) != 4:
                    raise DomainError(
                        f"{entry_where}.boxes[{frame_key}][{j}]: expected a 4-integer array"
                    )
                parsed.append(
                    BBox(*(_parse_int(c, f"{entry_where}.boxes[{frame_key}][{j}]") for c in coords))
                )
            boxes[frame] = tuple(parsed)

        anomalies.append(
            AnomalyAnnotation(
                type=atype,
                span=FrameSpan(start, end, Basis.SPARSE),
                reason=reason,
                boxes=boxes,
                saliency=saliency,
            )
        )

    gt = GroundTruth(video_id=video_id, status=status, anomalies=tuple(anomalies))
    return AnnotationDocument(
        video_id=video_id,
        frame_count=frame_count,
        source_fps=float(source_fps),
        ground_truth=gt,
    )


def annotation_to_dict(doc: AnnotationDocument) -> dict[str, Any]:
    """Serialize back to the annotation-file JSON shape."""
    fps = doc.source_fps
    return {
        "video_id": doc.video_id,
        "frame_count": doc.frame_count,
        "source_fps": int(fps) if float(fps).is_integer() else fps,
        "status": doc.ground_truth.status.value,
        "anomalies": [
            {
                "type": a.type.label,
                "start_frame": a.span.start,
                "end_frame": a.span.end,
                "reason": a.reason,
                "saliency": a.saliency.value,
                "boxes": {
                    str(frame): [list(b.as_tuple()) for b in boxes]
                    for frame, boxes in sorted(a.boxes.items())
                },
            }
            for a in doc.ground_truth.anomalies
        ],
    }


def load_annotation_file(path: Union[str, Path]) -> AnnotationDocument:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return parse_annotation(obj, where=str(path))


def save_annotation_file(doc: AnnotationDocument, path: Union[str, Path]) -> None:
    path = Path(path)
    path.write_text(
        json.dumps(annotation_to_dict(doc), indent=2, sort_keys=False) + "\n",
        encoding="utf-8",
    )


def validate_annotation_file(
    path: Union[str, Path], annotation_fps: Rate = DEFAULT_ANNOTATION_FPS
) -> list[Violation]:
    """Structural + semantic validation of one file; problems come back as data."""
    try:
        doc = load_annotation_file(path)
    except (OSError, json.JSONDecodeError, DomainError) as exc:
        return [Violation("FILE_FORMAT", str(exc), str(path))]
    try:
        video = doc.video()
    except DomainError as exc:
        return [Violation("VIDEO_META", str(exc), str(path))]
    return validate_ground_truth(doc.ground_truth, video, annotation_fps)


def load_annotation_dir(path: Union[str, Path]) -> list[AnnotationDocument]:
    """Load every ``*.json`` annotation file in a directory (skips manifests)."""
    docs = []
    for file in sorted(Path(path).glob("*.json")):
        if file.name == "manifest.json":
            continue
        docs.append(load_annotation_file(file))
    return docs

"""Parsing and validation of the judge's structured two-turn JSON outputs.

The wire schema (key names are normative): top level ``COT``, ``status``,
``anomalies``; each anomaly entry carries ``Attributed Label``,
``Reason for Anomaly``, ``Problem Region``, plus ``Attributed Time Region``
on turn one or ``BBOX`` (keyed ``"Frame N"`` with clip-local indices) on
turn two.

Strict mode demands the raw text be exactly one JSON object — no prose, no
code fences; lenient mode (benchmark scoring of third-party outputs only)
first extracts the first balanced top-level object. Parse failures raise
:class:`~vidsentry.errors.ParseError` carrying a violation code; semantic
problems on a parsed response are reported by :func:`check_validity` as data.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass
from typing import Any, Mapping

from .domain import AnomalyType, Basis, BBox, FrameSpan, Status, parse_taxonomy_label
from .errors import DomainError, ParseError

log = logging.getLogger(__name__)

KEY_COT = "COT"
KEY_STATUS = "status"
KEY_ANOMALIES = "anomalies"
KEY_LABEL = "Attributed Label"
KEY_REASON = "Reason for Anomaly"
KEY_REGION = "Problem Region"
KEY_TIME_REGION = "Attributed Time Region"
KEY_BBOX = "BBOX"


class TurnKind(enum.Enum):
    TURN_ONE = 1
    TURN_TWO = 2


class ViolationCode(str, enum.Enum):
    """Stable vocabulary of parse/validity violations (see README)."""

    NOT_JSON = "NOT_JSON"  # text contains no parsable JSON object
    EXTRA_TEXT = "EXTRA_TEXT"  # strict mode: prose/fences around the object
    NOT_OBJECT = "NOT_OBJECT"  # top-level JSON value is not an object
    MISSING_STATUS = "MISSING_STATUS"
    BAD_STATUS = "BAD_STATUS"  # status is not normal/abnormal
    MISSING_COT = "MISSING_COT"
    BAD_ANOMALIES = "BAD_ANOMALIES"  # anomalies missing or not an array
    BAD_ENTRY = "BAD_ENTRY"  # anomaly entry is not an object
    MISSING_LABEL = "MISSING_LABEL"
    UNKNOWN_LABEL = "UNKNOWN_LABEL"  # label outside the five-way taxonomy
    BAD_WINDOW = "BAD_WINDOW"  # time region present but unusable
    BAD_FRAME_KEY = "BAD_FRAME_KEY"  # BBOX key not of the form "Frame N"
    BAD_BOX = "BAD_BOX"  # box array malformed or coordinates invalid
    NONEMPTY_NORMAL = "NONEMPTY_NORMAL"  # normal status with anomaly entries
    EMPTY_ABNORMAL = "EMPTY_ABNORMAL"  # abnormal status with no entries
    MISSING_WINDOW = "MISSING_WINDOW"  # turn-one entry without a time region
    MISSING_BOXES = "MISSING_BOXES"  # turn-two entry without boxes
    FRAME_GAP = "FRAME_GAP"  # turn-two BBOX keys do not cover the clip
    FRAME_OUT_OF_RANGE = "FRAME_OUT_OF_RANGE"  # BBOX key beyond the clip


@dataclass(frozen=True)
class AnomalyEntry:
    """One predicted anomaly; turn one carries a window, turn two boxes."""

    type: AnomalyType
    reason: str = ""
    problem_region: str = ""
    time_region: FrameSpan | None = None
    boxes: Mapping[int, tuple[BBox, ...]] | None = None


@dataclass(frozen=True)
class TurnResponse:
    turn: TurnKind
    status: Status
    cot: str
    entries: tuple[AnomalyEntry, ...]
    raw: str = ""


@dataclass(frozen=True)
class ValidityReport:
    reasons: tuple[ViolationCode, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.reasons


_TIME_REGION_RE = re.compile(
    r"^\s*(?:frame\s*)?(\d+)\s*(?:-\s*(?:frame\s*)?(\d+))?\s*$", re.IGNORECASE
)
_FRAME_KEY_RE = re.compile(r"^\s*frame\s+(\d+)\s*$", re.IGNORECASE)


def parse_time_region(text: str, sequence_length: int) -> FrameSpan:
    """Parse ``Frame a - Frame b`` / ``Frame a`` / bare ``a-b`` / ``a`` forms.

    Out-of-range indices are errors, never clamped.
    """
    if not isinstance(text, str):
        raise ParseError(ViolationCode.BAD_WINDOW, f"time region must be a string, got {text!r}")
    match = _TIME_REGION_RE.match(text)
    if not match:
        raise ParseError(ViolationCode.BAD_WINDOW, f"unrecognized time region {text!r}")
    start = int(match.group(1))
    end = int(match.group(2)) if match.group(2) is not None else start
    if start > end:
        raise ParseError(ViolationCode.BAD_WINDOW, f"inverted time region {text!r}")
    if end >= sequence_length:
        raise ParseError(
            ViolationCode.BAD_WINDOW,
            f"time region {text!r} exceeds sequence of length {sequence_length}",
        )
    return FrameSpan(start, end, Basis.SPARSE)


def extract_json_object(text: str) -> str | None:
    """Return the first balanced top-level ``{...}`` in ``text``, if any."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def _pairs_hook(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in pairs:
        if key in out:
            log.warning("duplicate JSON key %r: last occurrence wins", key)
        out[key] = value
    return out


def _load_object(raw: str, mode: str) -> Any:
    if mode not in ("strict", "lenient"):
        raise DomainError(f"unknown parse mode {mode!r}")
    try:
        return json.loads(raw, object_pairs_hook=_pairs_hook)
    except json.JSONDecodeError:
        pass
    candidate = extract_json_object(raw)
    if candidate is None:
        raise ParseError(ViolationCode.NOT_JSON, "no JSON object found in response")
    try:
        obj = json.loads(candidate, object_pairs_hook=_pairs_hook)
    except json.JSONDecodeError as exc:
        raise ParseError(ViolationCode.NOT_JSON, f"unparseable response: {exc}") from None
    if mode == "strict":
        raise ParseError(
            ViolationCode.EXTRA_TEXT,
            "response must be exactly one JSON object with no surrounding text",
        )
    return obj


def _parse_status(value: Any) -> Status:
    if not isinstance(value, str):
        raise ParseError(ViolationCode.BAD_STATUS, f"status must be a string, got {value!r}")
    try:
        return Status(value.strip().lower())
    except ValueError:
        raise ParseError(ViolationCode.BAD_STATUS, f"status must be normal/abnormal, got {value!r}") from None


def _parse_boxes(value: Any) -> dict[int, tuple[BBox, ...]]:
    if not isinstance(value, Mapping):
        raise ParseError(ViolationCode.BAD_BOX, f"BBOX must be an object, got {type(value).__name__}")
    boxes: dict[int, tuple[BBox, ...]] = {}
    for key, coords in value.items():
        match = _FRAME_KEY_RE.match(key) if isinstance(key, str) else None
        if not match:
            raise ParseError(ViolationCode.BAD_FRAME_KEY, f"BBOX key {key!r} is not 'Frame N'")
        frame = int(match.group(1))
        # One array or an array of arrays; both occur in the wild.
        if isinstance(coords, list) and len(coords) == 4 and all(
            isinstance(c, (int, float)) and not isinstance(c, bool) for c in coords
        ):
            coords = [coords]
        if not isinstance(coords, list):
            raise ParseError(ViolationCode.BAD_BOX, f"BBOX[{key!r}] must be a coordinate array")
        parsed = []
        for item in coords:
            if (
                not isinstance(item, list)
                or len(item) != 4
                or any(isinstance(c, bool) or not isinstance(c, int) for c in item)
            ):
                raise ParseError(
                    ViolationCode.BAD_BOX, f"BBOX[{key!r}] entries must be 4-integer arrays"
                )
            box = BBox(*item)
            problems = box.violations()
            if problems:
                raise ParseError(ViolationCode.BAD_BOX, f"BBOX[{key!r}]: {'; '.join(problems)}")
            parsed.append(box)
        if frame in boxes:
            log.warning("duplicate BBOX frame %d: last occurrence wins", frame)
        boxes[frame] = tuple(parsed)
    return boxes


def parse_turn(
    raw: str,
    turn: TurnKind,
    mode: str = "strict",
    sequence_length: int | None = None,
) -> TurnResponse:
    """Parse one turn's raw text into a typed response.

    Args:
        raw: the judge's output text.
        turn: which turn the text answers.
        mode: "strict" (reward computation) or "lenient" (baseline scoring).
        sequence_length: when given, turn-one time regions are range-checked
            against it.

    Raises:
        ParseError: malformed text, missing required keys, unknown taxonomy
            labels, unusable time regions, malformed box arrays.
    """
    obj = _load_object(raw, mode)
    if not isinstance(obj, Mapping):
        raise ParseError(ViolationCode.NOT_OBJECT, "top-level JSON value must be an object")

    if KEY_STATUS not in obj:
        raise ParseError(ViolationCode.MISSING_STATUS, f"missing {KEY_STATUS!r}")
    status = _parse_status(obj[KEY_STATUS])
    if KEY_COT not in obj:
        raise ParseError(ViolationCode.MISSING_COT, f"missing {KEY_COT!r}")
    cot = obj[KEY_COT]
    if not isinstance(cot, str):
        raise ParseError(ViolationCode.MISSING_COT, f"{KEY_COT!r} must be a string")
    if KEY_ANOMALIES not in obj or not isinstance(obj[KEY_ANOMALIES], list):
        raise ParseError(ViolationCode.BAD_ANOMALIES, f"{KEY_ANOMALIES!r} must be an array")

    entries = []
    for i, item in enumerate(obj[KEY_ANOMALIES]):
        if not isinstance(item, Mapping):
            raise ParseError(ViolationCode.BAD_ENTRY, f"anomalies[{i}] must be an object")
        if KEY_LABEL not in item:
            raise ParseError(ViolationCode.MISSING_LABEL, f"anomalies[{i}] missing {KEY_LABEL!r}")
        try:
            atype = parse_taxonomy_label(item[KEY_LABEL])
        except DomainError as exc:
            raise ParseError(ViolationCode.UNKNOWN_LABEL, f"anomalies[{i}]: {exc}") from None

        reason = item.get(KEY_REASON, "")
        region = item.get(KEY_REGION, "")
        if not isinstance(reason, str) or not isinstance(region, str):
            raise ParseError(ViolationCode.BAD_ENTRY, f"anomalies[{i}] text fields must be strings")

        time_region: FrameSpan | None = None
        boxes: dict[int, tuple[BBox, ...]] | None = None
        if turn is TurnKind.TURN_ONE:
            if KEY_TIME_REGION in item:
                time_region = parse_time_region(
                    item[KEY_TIME_REGION],
                    sequence_length if sequence_length is not None else 10**9,
                )
            if KEY_BBOX in item:
                log.warning("anomalies[%d]: ignoring surplus %r on turn one", i, KEY_BBOX)
        else:
            if KEY_BBOX in item:
                boxes = _parse_boxes(item[KEY_BBOX])
            if KEY_TIME_REGION in item:
                log.warning("anomalies[%d]: ignoring surplus %r on turn two", i, KEY_TIME_REGION)

        entries.append(
            AnomalyEntry(
                type=atype,
                reason=reason,
                problem_region=region,
                time_region=time_region,
                boxes=boxes,
            )
        )

    return TurnResponse(turn=turn, status=status, cot=cot, entries=tuple(entries), raw=raw)


def check_validity(
    resp: TurnResponse,
    turn: TurnKind,
    expected_clip_frames: int | None = None,
) -> ValidityReport:
    """Stage-specific, status-conditioned validity predicate.

    Valid iff: normal responses carry no entries; abnormal responses carry at
    least one entry, each with a taxonomy type and a time window (turn one)
    or frame-indexed boxes (turn two); and, when ``expected_clip_frames`` is
    given on turn two, the union of box keys covers every clip frame.
    Normal-status responses ignore ``expected_clip_frames``.
    """
    if resp.turn is not turn:
        raise DomainError(f"response is for {resp.turn}, checked as {turn}")

    reasons: list[ViolationCode] = []
    if resp.status is Status.NORMAL:
        if resp.entries:
            reasons.append(ViolationCode.NONEMPTY_NORMAL)
        return ValidityReport(tuple(reasons))

    if not resp.entries:
        reasons.append(ViolationCode.EMPTY_ABNORMAL)
    covered: set[int] = set()
    for entry in resp.entries:
        if turn is TurnKind.TURN_ONE:
            if entry.time_region is None:
                reasons.append(ViolationCode.MISSING_WINDOW)
        else:
            if not entry.boxes:
                reasons.append(ViolationCode.MISSING_BOXES)
            else:
                covered.update(entry.boxes)
    if turn is TurnKind.TURN_TWO and expected_clip_frames is not None and resp.entries:
        if any(f >= expected_clip_frames for f in covered):
            reasons.append(ViolationCode.FRAME_OUT_OF_RANGE)
        if not covered.issuperset(range(expected_clip_frames)):
            reasons.append(ViolationCode.FRAME_GAP)

    # Deduplicate, preserving first-seen order.
    seen: list[ViolationCode] = []
    for code in reasons:
        if code not in seen:
            seen.append(code)
    return ValidityReport(tuple(seen))


def serialize_turn(resp: TurnResponse) -> str:
    """Canonical JSON serialization (round-trips through :func:`parse_turn`)."""
    entries = []
    for e in resp.entries:
        item: dict[str, Any] = {}
        if resp.turn is TurnKind.TURN_ONE and e.time_region is not None:
            item[KEY_TIME_REGION] = f"Frame {e.time_region.start} - Frame {e.time_region.end}"
        item[KEY_LABEL] = e.type.label
        item[KEY_REASON] = e.reason
        item[KEY_REGION] = e.problem_region
        if resp.turn is TurnKind.TURN_TWO and e.boxes is not None:
            item[KEY_BBOX] = {
                f"Frame {frame}": (
                    list(boxes[0].as_tuple())
                    if len(boxes) == 1
                    else [list(b.as_tuple()) for b in boxes]
                )
                for frame, boxes in sorted(e.boxes.items())
            }
        entries.append(item)
    doc = {KEY_COT: resp.cot, KEY_STATUS: resp.status.value, KEY_ANOMALIES: entries}
    return json.dumps(doc, ensure_ascii=False)

from __future__ import annotations

import dataclasses
import json

import pytest

from vidsentry.codec import (
    AnomalyEntry,
    TurnKind,
    TurnResponse,
    ViolationCode,
    check_validity,
    extract_json_object,
    parse_time_region,
    parse_turn,
    serialize_turn,
)
from vidsentry.domain import AnomalyType, Basis, BBox, FrameSpan, Status
from vidsentry.errors import DomainError, ParseError

TURN_ONE_NORMAL = '{"COT": "all frames look fine", "status": "normal", "anomalies": []}'

TURN_ONE_ABNORMAL = json.dumps(
    {
        "COT": "frame scan",
        "status": "abnormal",
        "anomalies": [
            {
                "Attributed Time Region": "Frame 3 - Frame 7",
                "Attributed Label": "Object Distortion",
                "Reason for Anomaly": "cup melts into table",
                "Problem Region": "table top",
            }
        ],
    }
)


def turn_two_doc(n_frames: int) -> str:
    return json.dumps(
        {
            "COT": "dense scan",
            "status": "abnormal",
            "anomalies": [
                {
                    "Attributed Label": "Human Distortion",
                    "Reason for Anomaly": "six fingers",
                    "Problem Region": "left hand",
                    "BBOX": {
                        f"Frame {k}": [100, 100, 300, 300] for k in range(n_frames)
                    },
                }
            ],
        }
    )


class TestParseTurn:
    def test_normal_turn_one(self):
        resp = parse_turn(TURN_ONE_NORMAL, TurnKind.TURN_ONE)
        assert resp.status is Status.NORMAL
        assert resp.entries == ()
        assert resp.cot == "all frames look fine"

    def test_abnormal_turn_one_window(self):
        resp = parse_turn(TURN_ONE_ABNORMAL, TurnKind.TURN_ONE, sequence_length=21)
        (entry,) = resp.entries
        assert entry.type is AnomalyType.OBJECT_DISTORTION
        assert entry.time_region == FrameSpan(3, 7, Basis.SPARSE)
        assert entry.boxes is None

    def test_turn_two_boxes_cover_clip(self):
        resp = parse_turn(turn_two_doc(9), TurnKind.TURN_TWO)
        (entry,) = resp.entries
        assert entry.time_region is None
        assert set(entry.boxes) == set(range(9))
        assert entry.boxes[0] == (BBox(100, 100, 300, 300),)

    def test_fenced_strict_fails_lenient_parses(self):
        fenced = f"```json\n{TURN_ONE_NORMAL}\n```"
        with pytest.raises(ParseError) as err:
            parse_turn(fenced, TurnKind.TURN_ONE, mode="strict")
        assert err.value.code == ViolationCode.EXTRA_TEXT
        resp = parse_turn(fenced, TurnKind.TURN_ONE, mode="lenient")
        assert resp.status is Status.NORMAL

    def test_prose_strict_fails(self):
        with pytest.raises(ParseError):
            parse_turn("Sure! Here is my analysis: " + TURN_ONE_NORMAL, TurnKind.TURN_ONE)

    @pytest.mark.parametrize(
        "mutation,code",
        [
            (lambda d: d.pop("status"), ViolationCode.MISSING_STATUS),
            (lambda d: d.update(status="maybe"), ViolationCode.BAD_STATUS),
            (lambda d: d.pop("COT"), ViolationCode.MISSING_COT),
            (lambda d: d.update(anomalies="nope"), ViolationCode.BAD_ANOMALIES),
        ],
    )
    def test_structural_errors(self, mutation, code):
        doc = json.loads(TURN_ONE_NORMAL)
        mutation(doc)
        with pytest.raises(ParseError) as err:
            parse_turn(json.dumps(doc), TurnKind.TURN_ONE)
        assert err.value.code == code

    def test_unknown_label(self):
        doc = json.loads(TURN_ONE_ABNORMAL)
        doc["anomalies"][0]["Attributed Label"] = "Blur"
        with pytest.raises(ParseError) as err:
            parse_turn(json.dumps(doc), TurnKind.TURN_ONE)
        assert err.value.code == ViolationCode.UNKNOWN_LABEL

    def test_window_out_of_range_is_parse_error(self):
        with pytest.raises(ParseError) as err:
            parse_turn(TURN_ONE_ABNORMAL, TurnKind.TURN_ONE, sequence_length=5)
        assert err.value.code == ViolationCode.BAD_WINDOW

    def test_degenerate_box_rejected(self):
        doc = json.loads(turn_two_doc(2))
        doc["anomalies"][0]["BBOX"]["Frame 0"] = [100, 100, 100, 300]
        with pytest.raises(ParseError) as err:
            parse_turn(json.dumps(doc), TurnKind.TURN_TWO)
        assert err.value.code == ViolationCode.BAD_BOX

    def test_bad_frame_key(self):
        doc = json.loads(turn_two_doc(2))
        doc["anomalies"][0]["BBOX"]["third frame"] = [0, 0, 10, 10]
        with pytest.raises(ParseError) as err:
            parse_turn(json.dumps(doc), TurnKind.TURN_TWO)
        assert err.value.code == ViolationCode.BAD_FRAME_KEY

    def test_not_json(self):
        with pytest.raises(ParseError) as err:
            parse_turn("no structure here at all", TurnKind.TURN_ONE)
        assert err.value.code == ViolationCode.NOT_JSON

    def test_duplicate_frame_keys_last_wins(self):
        raw = (
            '{"COT": "x", "status": "abnormal", "anomalies": [{"Attributed Label": '
            '"Object Distortion", "Reason for Anomaly": "", "Problem Region": "", '
            '"BBOX": {"Frame 0": [0, 0, 10, 10], "Frame 0": [5, 5, 20, 20]}}]}'
        )
        resp = parse_turn(raw, TurnKind.TURN_TWO)
        assert resp.entries[0].boxes[0] == (BBox(5, 5, 20, 20),)

    def test_surplus_time_region_on_turn_two_ignored(self):
        doc = json.loads(turn_two_doc(2))
        doc["anomalies"][0]["Attributed Time Region"] = "Frame 0 - Frame 1"
        resp = parse_turn(json.dumps(doc), TurnKind.TURN_TWO)
        assert resp.entries[0].time_region is None


class TestParseTimeRegion:
    @pytest.mark.parametrize(
        "text,start,end",
        [
            ("Frame 3 - Frame 7", 3, 7),
            ("Frame 5", 5, 5),
            ("5", 5, 5),
            ("3-7", 3, 7),
            ("frame 3-frame 7", 3, 7),
            ("  Frame  10  -  Frame  12 ", 10, 12),
        ],
    )
    def test_grammar(self, text, start, end):
        assert parse_time_region(text, 21) == FrameSpan(start, end, Basis.SPARSE)

    @pytest.mark.parametrize("text", ["Frame 7 - Frame 3", "frames 3 to 7", "3..7", ""])
    def test_rejects(self, text):
        with pytest.raises(ParseError):
            parse_time_region(text, 21)

    def test_range_check(self):
        with pytest.raises(ParseError):
            parse_time_region("Frame 5 - Frame 30", 21)


class TestCheckValidity:
    def test_normal_empty_is_valid(self):
        resp = parse_turn(TURN_ONE_NORMAL, TurnKind.TURN_ONE)
        assert check_validity(resp, TurnKind.TURN_ONE).valid

    def test_missing_window(self):
        resp = TurnResponse(
            TurnKind.TURN_ONE,
            Status.ABNORMAL,
            "x",
            (AnomalyEntry(type=AnomalyType.OBJECT_DISTORTION),),
        )
        report = check_validity(resp, TurnKind.TURN_ONE)
        assert not report.valid
        assert ViolationCode.MISSING_WINDOW in report.reasons

    def test_frame_gap(self):
        # Boxes on frames 0-7 of a 9-frame clip: exactly one omitted frame.
        resp = parse_turn(turn_two_doc(8), TurnKind.TURN_TWO)
        report = check_validity(resp, TurnKind.TURN_TWO, expected_clip_frames=9)
        assert report.reasons == (ViolationCode.FRAME_GAP,)

    def test_full_coverage_valid(self):
        resp = parse_turn(turn_two_doc(9), TurnKind.TURN_TWO)
        assert check_validity(resp, TurnKind.TURN_TWO, expected_clip_frames=9).valid

    def test_normal_ignores_expected_clip_frames(self):
        resp = parse_turn(
            '{"COT": "x", "status": "normal", "anomalies": []}', TurnKind.TURN_TWO
        )
        assert check_validity(resp, TurnKind.TURN_TWO, expected_clip_frames=50).valid

    def test_abnormal_without_entries(self):
        resp = TurnResponse(TurnKind.TURN_ONE, Status.ABNORMAL, "x", ())
        report = check_validity(resp, TurnKind.TURN_ONE)
        assert report.reasons == (ViolationCode.EMPTY_ABNORMAL,)

    def test_nonempty_normal(self):
        resp = TurnResponse(
            TurnKind.TURN_ONE,
            Status.NORMAL,
            "x",
            (AnomalyEntry(type=AnomalyType.MOTION_ANOMALY, time_region=FrameSpan(0, 1)),),
        )
        assert check_validity(resp, TurnKind.TURN_ONE).reasons == (
            ViolationCode.NONEMPTY_NORMAL,
        )

    def test_turn_mismatch_is_contract_error(self):
        resp = parse_turn(TURN_ONE_NORMAL, TurnKind.TURN_ONE)
        with pytest.raises(DomainError):
            check_validity(resp, TurnKind.TURN_TWO)

    def test_deterministic(self):
        resp = parse_turn(turn_two_doc(8), TurnKind.TURN_TWO)
        first = check_validity(resp, TurnKind.TURN_TWO, expected_clip_frames=9)
        second = check_validity(resp, TurnKind.TURN_TWO, expected_clip_frames=9)
        assert first == second


class TestRoundTrip:
    @pytest.mark.parametrize("raw,turn,length", [
        (TURN_ONE_NORMAL, TurnKind.TURN_ONE, 21),
        (TURN_ONE_ABNORMAL, TurnKind.TURN_ONE, 21),
        (turn_two_doc(5), TurnKind.TURN_TWO, None),
    ])
    def test_serialize_then_parse_is_identity(self, raw, turn, length):
        resp = parse_turn(raw, turn, sequence_length=length)
        reparsed = parse_turn(serialize_turn(resp), turn, sequence_length=length)
        assert dataclasses.replace(reparsed, raw="") == dataclasses.replace(resp, raw="")

    def test_strict_and_lenient_agree_when_strict_succeeds(self):
        for raw, turn in [(TURN_ONE_NORMAL, TurnKind.TURN_ONE), (turn_two_doc(3), TurnKind.TURN_TWO)]:
            strict = parse_turn(raw, turn, mode="strict")
            lenient = parse_turn(raw, turn, mode="lenient")
            assert strict == lenient
            assert check_validity(strict, turn) == check_validity(lenient, turn)


def test_extract_json_object_nesting_and_strings():
    text = 'prefix {"a": {"b": "}"}, "c": [1, 2]} suffix {"d": 1}'
    assert extract_json_object(text) == '{"a": {"b": "}"}, "c": [1, 2]}'
    assert extract_json_object("no braces") is None

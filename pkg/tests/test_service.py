from __future__ import annotations

import json
import math
import threading
import urllib.error
import urllib.request

import pytest

from vidsentry import __version__
from vidsentry.bench import prediction_to_dict, verdict_to_prediction
from vidsentry.config import EngineConfig, JudgeSpec
from vidsentry.orchestrator import run_two_turn
from vidsentry.service import make_server
from vidsentry.synth import PerfectOracleJudge, generate_corpus


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    world = generate_corpus(seed=5, normal=3, abnormal=3)
    return str(world.save(tmp_path_factory.mktemp("corpus")))


@pytest.fixture(scope="module")
def server(corpus_dir):
    config = EngineConfig(judge=JudgeSpec(kind="scripted", behavior="perfect"),
                          corpus_dir=corpus_dir)
    httpd = make_server(config, host="127.0.0.1", port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}"
    httpd.shutdown()
    httpd.server_close()


def post(base: str, path: str, body: dict) -> tuple[int, dict, bytes]:
    data = json.dumps(body).encode("utf-8")
    request = urllib.request.Request(
        base + path, data=data, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(request, timeout=10) as resp:
            raw = resp.read()
            return resp.status, json.loads(raw), raw
    except urllib.error.HTTPError as err:
        raw = err.read()
        return err.code, json.loads(raw), raw


def get(base: str, path: str) -> tuple[int, dict]:
    try:
        with urllib.request.urlopen(base + path, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


class TestHealthz:
    def test_ok_with_version(self, server):
        status, body = get(server, "/healthz")
        assert status == 200
        assert body["status"] == "ok"
        assert body["version"] == __version__

    def test_unknown_path_404(self, server):
        status, _ = get(server, "/nope")
        assert status == 404


class TestReward:
    def test_normal_video_scores_099(self, server):
        status, body, _ = post(server, "/v1/reward", {"video": "normal-0000"})
        assert status == 200
        assert body["status"] == "normal"
        assert body["scalar_reward"] == pytest.approx(0.99 / (0.99 + 0.01))

    def test_abnormal_video_low_scalar(self, server):
        status, body, _ = post(server, "/v1/reward", {"video": "abnormal-0000"})
        assert status == 200
        assert body["status"] == "abnormal"
        assert body["scalar_reward"] == pytest.approx(0.01)
        assert body["evidence"]

    def test_missing_video_field_is_400(self, server):
        status, body, _ = post(server, "/v1/reward", {})
        assert status == 400
        assert "video" in body["error"]

    def test_unknown_video_id_is_422(self, server):
        status, _, _ = post(server, "/v1/reward", {"video": "ghost-0000"})
        assert status == 422

    def test_bad_json_body_is_400(self, server):
        request = urllib.request.Request(
            server + "/v1/reward", data=b"{oops", headers={"Content-Type": "application/json"}
        )
        with pytest.raises(urllib.error.HTTPError) as err:
            urllib.request.urlopen(request, timeout=10)
        assert err.value.code == 400

    def test_idempotent_byte_for_byte(self, server):
        body = {"video": "abnormal-0001", "prompt": "check", "seed": 3}
        _, _, first = post(server, "/v1/reward", body)
        _, _, second = post(server, "/v1/reward", body)
        assert first == second

    def test_all_judge_endpoints_idempotent(self, server):
        requests = [
            ("/v1/rollouts/score", {"video": "abnormal-0000", "group_size": 3, "seed": 9}),
            ("/v1/best-of-n", {"candidates": ["abnormal-0000", "normal-0002"], "seed": 9}),
        ]
        for path, body in requests:
            _, _, first = post(server, path, body)
            _, _, second = post(server, path, body)
            assert first == second, path


class TestRolloutScore:
    def test_judge_mode_zero_advantages(self, server):
        status, body, _ = post(
            server, "/v1/rollouts/score", {"video": "abnormal-0000", "group_size": 4}
        )
        assert status == 200
        assert body["advantages"] == [0.0, 0.0, 0.0, 0.0]
        assert body["rewards"] == [9.0] * 4
        assert all(b["total"] == 9.0 for b in body["breakdowns"])

    def test_group_size_one_is_422(self, server):
        status, _, _ = post(
            server, "/v1/rollouts/score", {"video": "abnormal-0000", "group_size": 1}
        )
        assert status == 422

    def test_math_mode(self, server):
        body = {
            "rollouts": [
                {
                    "reward": 1.0,
                    "logprobs_current": [math.log(1.5)],
                    "logprobs_old": [0.0],
                    "logprobs_ref": [math.log(2.0) + math.log(1.5)],
                },
                {
                    "reward": -1.0,
                    "logprobs_current": [math.log(0.5)],
                    "logprobs_old": [0.0],
                    "logprobs_ref": [math.log(0.5)],
                },
            ],
            "epsilon_clip": 0.2,
            "beta": 0.04,
            "epsilon_adv": 0.0,
        }
        status, out, _ = post(server, "/v1/rollouts/score", body)
        assert status == 200
        assert out["advantages"] == [1.0, -1.0]
        expected_jclip = (min(1.5, 1.2) * 1.0 + min(-0.5, -0.8)) / 2
        expected_kl = (2 - math.log(2) - 1) / 2
        assert out["j_clip"] == pytest.approx(expected_jclip, abs=1e-9)
        assert out["kl"] == pytest.approx(expected_kl, abs=1e-9)
        assert out["objective"] == pytest.approx(expected_jclip - 0.04 * expected_kl, abs=1e-9)


class TestEvaluateAndValidate:
    def _predictions(self, corpus_dir):
        from vidsentry.synth import SynthWorld

        world = SynthWorld.load(corpus_dir)
        judge = PerfectOracleJudge(world)
        preds = []
        for vid in world.ids:
            verdict = run_two_turn(world.video(vid), "p", judge)
            preds.append(prediction_to_dict(verdict_to_prediction(verdict, vid)))
        return preds

    def test_evaluate_inline(self, server, corpus_dir):
        preds = self._predictions(corpus_dir)
        status, body, _ = post(
            server, "/v1/evaluate", {"predictions": preds, "annotations_dir": corpus_dir}
        )
        assert status == 200
        assert body["report"]["accuracy"] == 1.0

    def test_evaluate_id_mismatch_422(self, server, corpus_dir):
        preds = self._predictions(corpus_dir)[:-1]
        status, body, _ = post(
            server, "/v1/evaluate", {"predictions": preds, "annotations_dir": corpus_dir}
        )
        assert status == 422
        assert "mismatch" in body["error"]

    def test_evaluate_rendered_markdown(self, server, corpus_dir):
        preds = self._predictions(corpus_dir)
        status, body, _ = post(
            server,
            "/v1/evaluate",
            {"predictions": preds, "annotations_dir": corpus_dir, "format": "md"},
        )
        assert status == 200
        assert body["rendered"].startswith("| Model |")

    def test_validate_clean_corpus(self, server, corpus_dir):
        status, body, _ = post(server, "/v1/validate", {"annotations_dir": corpus_dir})
        assert status == 200
        assert body["valid"] is True

    def test_validate_flags_bad_document(self, server):
        bad = {
            "video_id": "x",
            "frame_count": 120,
            "source_fps": 24,
            "status": "abnormal",
            "anomalies": [
                {
                    "type": "Object Distortion",
                    "start_frame": 2,
                    "end_frame": 99,
                    "reason": "",
                    "saliency": "salient",
                    "boxes": {},
                }
            ],
        }
        status, body, _ = post(server, "/v1/validate", {"annotations": [bad]})
        assert status == 200
        assert body["valid"] is False
        assert body["violations"]["x"][0]["code"] == "SPAN_RANGE"


class TestBestOfN:
    def test_oracle_picks_clean_candidate(self, server):
        status, body, _ = post(
            server,
            "/v1/best-of-n",
            {"candidates": ["abnormal-0000", "normal-0001", "abnormal-0002"]},
        )
        assert status == 200
        assert body["selected_index"] == 1

    def test_empty_candidates_400(self, server):
        status, _, _ = post(server, "/v1/best-of-n", {"candidates": []})
        assert status == 400


class TestJudgeFailureMapping:
    def test_unreachable_judge_is_502(self, corpus_dir):
        config = EngineConfig(
            judge=JudgeSpec(kind="http", url="http://127.0.0.1:1/judge",
                            timeout_s=0.2, retries=0),
            corpus_dir=corpus_dir,
        )
        httpd = make_server(config, host="127.0.0.1", port=0)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        try:
            base = f"http://127.0.0.1:{httpd.server_address[1]}"
            status, body, _ = post(base, "/v1/reward", {"video": "normal-0000"})
            assert status == 502
        finally:
            httpd.shutdown()
            httpd.server_close()

"""Judge backends behind the newline-delimited JSON wire protocol.

Request: ``{"request_id", "turn", "frames", "prompt", "prior_cot"}``;
response: ``{"request_id", "raw_text", "p_normal", "p_abnormal"}``. The same
message shape travels over HTTP POST bodies or a subprocess stdin/stdout
pipe. Transport failures raise :class:`~vidsentry.errors.JudgeError`
(retriable), never parse errors.
"""

from __future__ import annotations

import json
import subprocess
import threading
import time
import urllib.error
import urllib.request
import uuid
from typing import Optional, Sequence

from .codec import TurnKind
from .config import EngineConfig, JudgeSpec
from .errors import ConfigError, JudgeError
from .orchestrator import JudgeBackend, JudgeReply
from .synth import JudgeScript, SynthWorld, scripted_judge


def _request_body(
    frames: Sequence[str], prompt: str, turn: TurnKind, prior_cot: Optional[str]
) -> dict:
    return {
        "request_id": uuid.uuid4().hex,
        "turn": turn.value,
        "frames": list(frames),
        "prompt": prompt,
        "prior_cot": prior_cot,
    }


def _parse_reply(raw: bytes | str, request_id: str) -> JudgeReply:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise JudgeError(f"judge returned non-JSON payload: {exc}") from exc
    if not isinstance(obj, dict):
        raise JudgeError("judge reply must be a JSON object")
    if obj.get("request_id") != request_id:
        raise JudgeError(
            f"judge reply for request {obj.get('request_id')!r}, expected {request_id!r}"
        )
    try:
        return JudgeReply(
            raw_text=obj["raw_text"],
            p_normal=float(obj["p_normal"]),
            p_abnormal=float(obj["p_abnormal"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise JudgeError(f"malformed judge reply: {exc}") from exc


class HttpJudge:
    """Judge served over HTTP; retries transport failures with linear backoff."""

    def __init__(self, url: str, timeout_s: float = 30.0, retries: int = 2, max_concurrency: int = 4):
        self.url = url
        self.timeout_s = timeout_s
        self.retries = retries
        self.max_concurrency = max_concurrency

    def judge(self, frames, prompt, turn, prior_cot=None, seed=None) -> JudgeReply:
        body = _request_body(frames, prompt, turn, prior_cot)
        payload = json.dumps(body).encode("utf-8")
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            request = urllib.request.Request(
                self.url, data=payload, headers={"Content-Type": "application/json"}
            )
            try:
                with urllib.request.urlopen(request, timeout=self.timeout_s) as resp:
                    return _parse_reply(resp.read(), body["request_id"])
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(0.1 * (attempt + 1))
        timed_out = isinstance(last, TimeoutError) or "timed out" in str(last)
        raise JudgeError(
            f"judge transport failed after {self.retries + 1} attempts: {last}",
            timeout=timed_out,
        )


class PipeJudge:
    """Judge spoken to over a subprocess pipe, one JSON line per message.

    The pipe is inherently serial, so calls are mutex-guarded and
    ``max_concurrency`` is 1.
    """

    max_concurrency = 1

    def __init__(self, cmd: Sequence[str], timeout_s: float = 30.0):
        self.cmd = list(cmd)
        self.timeout_s = timeout_s
        self._lock = threading.Lock()
        self._proc: subprocess.Popen | None = None

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.cmd,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise JudgeError(f"cannot start judge process {self.cmd}: {exc}") from exc
        return self._proc

    def judge(self, frames, prompt, turn, prior_cot=None, seed=None) -> JudgeReply:
        body = _request_body(frames, prompt, turn, prior_cot)
        line = json.dumps(body)
        with self._lock:
            proc = self._ensure()
            try:
                assert proc.stdin is not None and proc.stdout is not None
                proc.stdin.write(line + "\n")
                proc.stdin.flush()
                reply = proc.stdout.readline()
            except (OSError, ValueError) as exc:
                raise JudgeError(f"judge pipe failed: {exc}") from exc
        if not reply:
            raise JudgeError("judge process closed its pipe")
        return _parse_reply(reply, body["request_id"])

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()


def build_judge(config: EngineConfig, world: SynthWorld | None = None) -> JudgeBackend:
    """Materialize the configured judge backend.

    Scripted judges need a synthetic corpus to answer from; pass one or set
    ``corpus_dir`` in the config.
    """
    spec: JudgeSpec = config.judge
    if spec.kind == "http":
        return HttpJudge(spec.url, spec.timeout_s, spec.retries, spec.max_concurrency)
    if spec.kind == "subprocess":
        return PipeJudge(spec.cmd, spec.timeout_s)
    if world is None:
        if not config.corpus_dir:
            raise ConfigError("a scripted judge needs corpus_dir (or an in-memory world)")
        world = SynthWorld.load(config.corpus_dir)
    return scripted_judge(
        JudgeScript(
            behavior=spec.behavior,
            seed=spec.seed,
            flip_prob=spec.flip_prob,
            window_jitter=spec.window_jitter,
            box_jitter=spec.box_jitter,
            malformed_mode=spec.malformed_mode,
        ),
        world,
    )

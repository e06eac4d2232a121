"""HTTP service exposing reward scoring, rollout scoring, evaluation,
validation, and best-of-N selection.

Endpoints: ``GET /healthz``, ``POST /v1/reward``, ``POST /v1/rollouts/score``,
``POST /v1/evaluate``, ``POST /v1/validate``, ``POST /v1/best-of-n``.
Status codes: 400 for request-schema violations, 422 for domain violations,
502 for judge transport failures, 504 for judge timeouts. All payloads are
JSON; frame payloads travel by handle, never by content.
"""

from __future__ import annotations

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Mapping

from . import __version__, _kernels, bench
from .config import EngineConfig
from .engine import Engine
from .errors import ConfigError, DomainError, JudgeError
from .synth import SynthWorld

log = logging.getLogger(__name__)


class SchemaError(Exception):
    """The request body does not match the endpoint schema (HTTP 400)."""


def _field(body: Mapping[str, Any], key: str, required: bool = True, default: Any = None) -> Any:
    if key not in body:
        if required:
            raise SchemaError(f"missing request field {key!r}")
        return default
    return body[key]


def _int_field(body: Mapping[str, Any], key: str, required: bool = True, default: int | None = None) -> Any:
    value = _field(body, key, required, default)
    if value is default and not required:
        return value
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"field {key!r} must be an integer")
    return value


def _optional_seed(body: Mapping[str, Any]) -> int | None:
    seed = body.get("seed")
    if seed is None:
        return None
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise SchemaError("field 'seed' must be an integer")
    return seed


class EngineService:
    """Route table over a shared :class:`Engine`."""

    def __init__(self, engine: Engine):
        self.engine = engine

    def healthz(self) -> dict[str, Any]:
        return {"status": "ok", "version": __version__, "kernel_backend": _kernels.BACKEND}

    def reward(self, body: Mapping[str, Any]) -> dict[str, Any]:
        video = _field(body, "video")
        prompt = _field(body, "prompt", required=False, default="")
        if not isinstance(prompt, str):
            raise SchemaError("field 'prompt' must be a string")
        return self.engine.reward(video, prompt, _optional_seed(body))

    def score_rollouts(self, body: Mapping[str, Any]) -> dict[str, Any]:
        if "rollouts" in body:
            rollouts = body["rollouts"]
            if not isinstance(rollouts, list):
                raise SchemaError("field 'rollouts' must be an array")
            return self.engine.score_logprob_batch(
                rollouts,
                epsilon_clip=body.get("epsilon_clip"),
                beta=body.get("beta"),
                epsilon_adv=body.get("epsilon_adv"),
            )
        video = _field(body, "video")
        group_size = _int_field(body, "group_size")
        prompt = _field(body, "prompt", required=False, default="")
        return self.engine.score_rollouts(
            video,
            body.get("ground_truth"),
            group_size,
            seed=_optional_seed(body),
            prompt=prompt,
        )

    def evaluate(self, body: Mapping[str, Any]) -> dict[str, Any]:
        preds_raw = body.get("predictions")
        preds_path = body.get("predictions_path")
        if preds_raw is None and preds_path is None:
            raise SchemaError("supply 'predictions' or 'predictions_path'")
        if preds_path is not None:
            predictions = bench.load_predictions(preds_path)
        else:
            if not isinstance(preds_raw, list):
                raise SchemaError("field 'predictions' must be an array")
            predictions = [bench.prediction_from_dict(p) for p in preds_raw]
        docs = self.engine.load_documents(body.get("annotations"), body.get("annotations_dir"))
        report = self.engine.evaluate(
            predictions,
            docs,
            type_matched=bool(body.get("type_matched", False)),
            extent_mode=body.get("extent_mode", "mean"),
        )
        fmt = body.get("format", "json")
        out: dict[str, Any] = {"report": bench.report_to_dict(report)}
        if fmt != "json":
            out["rendered"] = bench.emit_report(report, fmt)
        return out

    def validate(self, body: Mapping[str, Any]) -> dict[str, Any]:
        docs = self.engine.load_documents(body.get("annotations"), body.get("annotations_dir"))
        violations = self.engine.validate_documents(docs)
        return {
            "violations": violations,
            "valid": all(not v for v in violations.values()),
        }

    def best_of_n(self, body: Mapping[str, Any]) -> dict[str, Any]:
        candidates = _field(body, "candidates")
        if not isinstance(candidates, list) or not candidates:
            raise SchemaError("field 'candidates' must be a non-empty array")
        prompt = _field(body, "prompt", required=False, default="")
        return self.engine.select_best(candidates, prompt, _optional_seed(body))


def make_handler(service: EngineService) -> type[BaseHTTPRequestHandler]:
    routes: dict[str, Callable[[Mapping[str, Any]], dict[str, Any]]] = {
        "/v1/reward": service.reward,
        "/v1/rollouts/score": service.score_rollouts,
        "/v1/evaluate": service.evaluate,
        "/v1/validate": service.validate,
        "/v1/best-of-n": service.best_of_n,
    }

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt: str, *args: Any) -> None:
            log.debug("%s - %s", self.address_string(), fmt % args)

        def _send(self, code: int, payload: dict[str, Any]) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self) -> None:  # noqa: N802 (http.server API)
            if self.path == "/healthz":
                self._send(200, service.healthz())
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self) -> None:  # noqa: N802
            handler = routes.get(self.path)
            if handler is None:
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length) if length else b"{}"
                body = json.loads(raw.decode("utf-8"))
                if not isinstance(body, dict):
                    raise SchemaError("request body must be a JSON object")
                self._send(200, handler(body))
            except json.JSONDecodeError as exc:
                self._send(400, {"error": f"request body is not valid JSON: {exc}"})
            except SchemaError as exc:
                self._send(400, {"error": str(exc)})
            except (DomainError, ConfigError) as exc:
                self._send(422, {"error": str(exc)})
            except JudgeError as exc:
                self._send(504 if exc.timeout else 502, {"error": str(exc)})
            except Exception as exc:  # pragma: no cover - last-resort guard
                log.exception("unhandled service error")
                self._send(500, {"error": f"internal error: {exc}"})

    return Handler


def make_server(
    config: EngineConfig,
    host: str = "127.0.0.1",
    port: int = 8080,
    world: SynthWorld | None = None,
) -> ThreadingHTTPServer:
    engine = Engine(config=config, world=world)
    handler = make_handler(EngineService(engine))
    return ThreadingHTTPServer((host, port), handler)


def serve(config: EngineConfig, host: str = "127.0.0.1", port: int = 8080) -> None:
    """Run the service until interrupted."""
    server = make_server(config, host, port)
    log.info("serving on http://%s:%d", host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()

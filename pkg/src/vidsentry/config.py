"""Engine configuration: one JSON document, env-overridable path.

Defaults follow the trained setup where one exists (4/8 fps sampling, reward
weights 1/2/2/2/5, saliency discounts 1.0/0.5); the optimizer constants
(clip 0.2, divergence weight 0.04, advantage epsilon 1e-4) are documented
engine defaults. The ``CAC_ENGINE_CONFIG`` environment variable overrides the
config path.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Union

from .errors import ConfigError
from .grpo import DEFAULT_BETA, DEFAULT_EPSILON_ADV, DEFAULT_EPSILON_CLIP
from .orchestrator import SamplingConfig
from .rewards import RewardWeights

ENV_CONFIG_PATH = "CAC_ENGINE_CONFIG"

JUDGE_KINDS = ("scripted", "http", "subprocess")
SCRIPTED_BEHAVIORS = ("perfect", "noisy", "always_normal", "always_abnormal", "malformed")


@dataclass(frozen=True)
class JudgeSpec:
    """Which judge backend to run and how to reach it."""

    kind: str = "scripted"
    behavior: str = "perfect"
    seed: int = 0
    flip_prob: float = 0.0
    window_jitter: int = 0
    box_jitter: int = 0
    malformed_mode: str = "fenced"
    url: str = ""
    cmd: tuple[str, ...] = ()
    timeout_s: float = 30.0
    retries: int = 2
    max_concurrency: int = 4

    def __post_init__(self) -> None:
        if self.kind not in JUDGE_KINDS:
            raise ConfigError(f"judge kind must be one of {JUDGE_KINDS}, got {self.kind!r}")
        if self.kind == "scripted" and self.behavior not in SCRIPTED_BEHAVIORS:
            raise ConfigError(f"scripted behavior must be one of {SCRIPTED_BEHAVIORS}")
        if self.kind == "http" and not self.url:
            raise ConfigError("http judge needs a url")
        if self.kind == "subprocess" and not self.cmd:
            raise ConfigError("subprocess judge needs a command")
        if self.timeout_s <= 0 or self.retries < 0:
            raise ConfigError("timeout_s must be positive and retries non-negative")


@dataclass(frozen=True)
class EngineConfig:
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    weights: RewardWeights = field(default_factory=RewardWeights)
    epsilon_clip: float = DEFAULT_EPSILON_CLIP
    beta: float = DEFAULT_BETA
    epsilon_adv: float = DEFAULT_EPSILON_ADV
    judge: JudgeSpec = field(default_factory=JudgeSpec)
    parse_mode: str = "strict"
    concurrency: int = 1
    report_format: str = "json"
    annotation_fps: float = 4.0
    corpus_dir: str | None = None

    def __post_init__(self) -> None:
        if self.parse_mode not in ("strict", "lenient"):
            raise ConfigError(f"parse_mode must be strict or lenient, got {self.parse_mode!r}")
        if self.report_format not in ("json", "csv", "md"):
            raise ConfigError(f"report_format must be json, csv, or md")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.epsilon_clip <= 0 or self.beta < 0 or self.epsilon_adv < 0:
            raise ConfigError("bad optimizer constants")
        if self.annotation_fps <= 0:
            raise ConfigError("annotation_fps must be positive")


def _build(obj: Mapping[str, Any]) -> EngineConfig:
    known = {
        "sampling", "weights", "epsilon_clip", "beta", "epsilon_adv", "judge",
        "parse_mode", "concurrency", "report_format", "annotation_fps", "corpus_dir",
    }
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        sampling = SamplingConfig(**obj.get("sampling", {}))
        weights = RewardWeights(**obj.get("weights", {}))
        judge_obj = dict(obj.get("judge", {}))
        if "cmd" in judge_obj:
            judge_obj["cmd"] = tuple(judge_obj["cmd"])
        judge = JudgeSpec(**judge_obj)
        return EngineConfig(
            sampling=sampling,
            weights=weights,
            epsilon_clip=obj.get("epsilon_clip", DEFAULT_EPSILON_CLIP),
            beta=obj.get("beta", DEFAULT_BETA),
            epsilon_adv=obj.get("epsilon_adv", DEFAULT_EPSILON_ADV),
            judge=judge,
            parse_mode=obj.get("parse_mode", "strict"),
            concurrency=obj.get("concurrency", 1),
            report_format=obj.get("report_format", "json"),
            annotation_fps=obj.get("annotation_fps", 4.0),
            corpus_dir=obj.get("corpus_dir"),
        )
    except TypeError as exc:
        raise ConfigError(f"bad config shape: {exc}") from exc
    except Exception as exc:  # Sampling/weights invariants raise DomainError
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: Union[str, Path, None] = None) -> EngineConfig:
    """Load configuration from ``path``, the ``CAC_ENGINE_CONFIG`` env var, or
    defaults when neither is set."""
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH) or None
    if path is None:
        return EngineConfig()
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return _build(obj)


def parse_judge_spec(text: str) -> JudgeSpec:
    """CLI judge descriptor: ``scripted:<behavior>[:k=v,...]``, ``http:<url>``,
    or ``cmd:<command line>``."""
    if text.startswith(("http://", "https://")):
        return JudgeSpec(kind="http", url=text)
    if text.startswith("http:"):
        return JudgeSpec(kind="http", url=text[len("http:"):])
    if text.startswith("cmd:"):
        import shlex

        return JudgeSpec(kind="subprocess", cmd=tuple(shlex.split(text[len("cmd:"):])))
    if text.startswith("scripted:"):
        parts = text.split(":")
        behavior = parts[1] if len(parts) > 1 else "perfect"
        kwargs: dict[str, Any] = {}
        if len(parts) > 2 and parts[2]:
            if behavior == "malformed" and "=" not in parts[2]:
                kwargs["malformed_mode"] = parts[2]
            else:
                for pair in parts[2].split(","):
                    key, _, value = pair.partition("=")
                    key = {"flip": "flip_prob", "window": "window_jitter", "box": "box_jitter"}.get(
                        key, key
                    )
                    kwargs[key] = float(value) if key == "flip_prob" else (
                        value if key == "malformed_mode" else int(value)
                    )
        return JudgeSpec(kind="scripted", behavior=behavior, **kwargs)
    raise ConfigError(f"unrecognized judge descriptor {text!r}")


def with_overrides(
    config: EngineConfig,
    parse_mode: str | None = None,
    judge: JudgeSpec | None = None,
    report_format: str | None = None,
    corpus_dir: str | None = None,
) -> EngineConfig:
    out = config
    if parse_mode is not None:
        out = replace(out, parse_mode=parse_mode)
    if judge is not None:
        out = replace(out, judge=judge)
    if report_format is not None:
        out = replace(out, report_format=report_format)
    if corpus_dir is not None:
        out = replace(out, corpus_dir=corpus_dir)
    return out

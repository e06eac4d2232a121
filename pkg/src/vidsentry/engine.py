"""Shared operational core behind the HTTP service and the CLI.

Both surfaces resolve inputs, run pipelines, and serialize results through
this one module, so their outputs are identical for identical inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import bench, grpo
from .annotations import AnnotationDocument, load_annotation_dir, parse_annotation
from .codec import serialize_turn
from .config import EngineConfig
from .domain import Violation, VideoDescriptor, validate_ground_truth
from .errors import ConfigError, DomainError
from .judges import build_judge
from .orchestrator import (
    JudgeBackend,
    Verdict,
    best_of_n,
    run_two_turn,
    score_rollout_group,
)
from .synth import SynthWorld


def verdict_to_dict(verdict: Verdict, video_id: str) -> dict[str, Any]:
    return {
        "video_id": video_id,
        "status": verdict.status.value,
        "scalar_reward": round(verdict.scalar_reward, 6),
        "window_source": (
            [verdict.window_source.start, verdict.window_source.end]
            if verdict.window_source
            else None
        ),
        "turn1": json.loads(serialize_turn(verdict.turn1)) if verdict.turn1 else None,
        "turn2": json.loads(serialize_turn(verdict.turn2)) if verdict.turn2 else None,
        "evidence": [
            {
                "type": e.type_label,
                "reason": e.reason,
                "problem_region": e.problem_region,
                "boxes": {
                    str(src): [list(b.as_tuple()) for b in boxes]
                    for src, boxes in sorted(e.boxes_by_source_frame.items())
                },
            }
            for e in verdict.evidence
        ],
        "flags": list(verdict.flags),
    }


def violations_to_list(violations: Sequence[Violation]) -> list[dict[str, str]]:
    return [{"code": v.code, "message": v.message, "path": v.path} for v in violations]


@dataclass
class Engine:
    """Config + optional synthetic world + lazily built judge backend."""

    config: EngineConfig
    world: SynthWorld | None = None
    _judge: JudgeBackend | None = None

    def __post_init__(self) -> None:
        if self.world is None and self.config.corpus_dir:
            self.world = SynthWorld.load(self.config.corpus_dir)

    @property
    def judge(self) -> JudgeBackend:
        if self._judge is None:
            self._judge = build_judge(self.config, self.world)
        return self._judge

    # -- input resolution ---------------------------------------------------

    def resolve_video(self, ref: Any) -> VideoDescriptor:
        """A video reference is a corpus id or a full descriptor object."""
        if isinstance(ref, str):
            if self.world is None:
                raise ConfigError(f"video id {ref!r} needs a corpus_dir to resolve against")
            return self.world.video(ref)
        if isinstance(ref, Mapping):
            try:
                return VideoDescriptor(
                    id=ref["id"],
                    frame_count=int(ref["frame_count"]),
                    source_fps=float(ref["source_fps"]),
                    frames=tuple(ref["frames"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DomainError(f"bad video descriptor: {exc}") from exc
        raise DomainError(f"video ref must be an id string or descriptor object, got {type(ref).__name__}")

    def resolve_ground_truth(self, ref: Any, video_id: str | None = None):
        if ref is None:
            if self.world is None or video_id is None:
                raise DomainError("no ground truth supplied and no corpus to resolve from")
            return self.world.ground_truth(video_id)
        if isinstance(ref, Mapping):
            return parse_annotation(ref, where="ground_truth").ground_truth
        if isinstance(ref, str):
            if self.world is None:
                raise ConfigError(f"ground-truth id {ref!r} needs a corpus_dir")
            return self.world.ground_truth(ref)
        raise DomainError("ground_truth must be an annotation object or a corpus id")

    def load_documents(self, annotations: Any, annotations_dir: Any) -> list[AnnotationDocument]:
        if annotations_dir:
            return load_annotation_dir(Path(annotations_dir))
        if annotations is not None:
            if not isinstance(annotations, list):
                raise DomainError("annotations must be an array of documents")
            return [parse_annotation(a, where=f"annotations[{i}]") for i, a in enumerate(annotations)]
        if self.world is not None:
            return [self.world.annotation_document(v) for v in self.world.ids]
        raise DomainError("no annotations supplied")

    # -- pipelines ----------------------------------------------------------

    def reward(self, video_ref: Any, prompt: str = "", seed: int | None = None) -> dict[str, Any]:
        video = self.resolve_video(video_ref)
        verdict = run_two_turn(
            video,
            prompt,
            self.judge,
            self.config.sampling,
            parse_mode=self.config.parse_mode,
            seed=seed,
        )
        return verdict_to_dict(verdict, video.id)

    def score_rollouts(
        self,
        video_ref: Any,
        gt_ref: Any,
        group_size: int,
        seed: int | None = None,
        prompt: str = "",
    ) -> dict[str, Any]:
        video = self.resolve_video(video_ref)
        gt = self.resolve_ground_truth(gt_ref, video.id)
        records, breakdowns = score_rollout_group(
            video,
            gt,
            self.judge,
            group_size,
            weights=self.config.weights,
            cfg=self.config.sampling,
            parse_mode=self.config.parse_mode,
            seed=seed,
            concurrency=self.config.concurrency,
            prompt=prompt,
        )
        rewards = [b.total for b in breakdowns]
        advantages = grpo.group_advantages(rewards, self.config.epsilon_adv)
        return {
            "video_id": video.id,
            "rewards": [round(r, 6) for r in rewards],
            "advantages": [round(a, 6) for a in advantages],
            "breakdowns": [b.to_dict() for b in breakdowns],
            "executed_turns": [r.executed_turns for r in records],
        }

    def score_logprob_batch(self, rollouts: Sequence[Mapping[str, Any]],
                            epsilon_clip: float | None = None,
                            beta: float | None = None,
                            epsilon_adv: float | None = None) -> dict[str, Any]:
        """Math-only group scoring from supplied rewards and log-prob streams."""
        rewards = []
        streams = []
        for i, item in enumerate(rollouts):
            try:
                rewards.append(float(item["reward"]))
                ratios = grpo.ratios_from_logprobs(item["logprobs_current"], item["logprobs_old"])
                ref_ratios = grpo.ratios_from_logprobs(item["logprobs_ref"], item["logprobs_current"])
            except (KeyError, TypeError) as exc:
                raise DomainError(f"rollouts[{i}]: {exc}") from exc
            streams.append(grpo.TokenRatioStream(ratios=ratios, ref_ratios=ref_ratios))
        group = grpo.RolloutGroup(
            rewards=tuple(rewards),
            streams=tuple(streams),
            epsilon_clip=self.config.epsilon_clip if epsilon_clip is None else epsilon_clip,
            beta=self.config.beta if beta is None else beta,
            epsilon_adv=self.config.epsilon_adv if epsilon_adv is None else epsilon_adv,
        )
        advantages = grpo.group_advantages(group.rewards, group.epsilon_adv)
        j_clip = grpo.clipped_surrogate(group, advantages)
        kl = grpo.kl_penalty(group)
        return {
            "advantages": advantages,
            "j_clip": j_clip,
            "kl": kl,
            "objective": j_clip - group.beta * kl,
        }

    def evaluate(
        self,
        predictions: Sequence[bench.PredictionRecord],
        docs: Sequence[AnnotationDocument],
        type_matched: bool = False,
        extent_mode: str = "mean",
    ) -> bench.MetricReport:
        return bench.evaluate_corpus(
            predictions,
            docs,
            annotation_fps=self.config.annotation_fps,
            type_matched=type_matched,
            extent_mode=extent_mode,
        )

    def validate_documents(self, docs: Sequence[AnnotationDocument]) -> dict[str, list[dict[str, str]]]:
        out: dict[str, list[dict[str, str]]] = {}
        for doc in docs:
            violations = validate_ground_truth(
                doc.ground_truth, doc.video(), self.config.annotation_fps
            )
            out[doc.video_id] = violations_to_list(violations)
        return out

    def select_best(
        self, candidate_refs: Sequence[Any], prompt: str = "", seed: int | None = None
    ) -> dict[str, Any]:
        videos = [self.resolve_video(ref) for ref in candidate_refs]
        index, scores = best_of_n(
            videos,
            prompt,
            self.judge,
            self.config.sampling,
            parse_mode=self.config.parse_mode,
            seed=seed,
            concurrency=self.config.concurrency,
        )
        return {"selected_index": index, "scores": [round(s, 6) for s in scores]}

    def predictions_for_corpus(
        self, video_ids: Sequence[str], prompt: str = "", seed: int | None = None
    ) -> list[bench.PredictionRecord]:
        """Run the full two-turn pipeline over corpus videos."""
        if self.world is None:
            raise ConfigError("corpus predictions need a corpus_dir")
        records = []
        for i, video_id in enumerate(video_ids):
            video = self.world.video(video_id)
            verdict = run_two_turn(
                video,
                prompt,
                self.judge,
                self.config.sampling,
                parse_mode=self.config.parse_mode,
                seed=None if seed is None else seed + 1000 * i,
            )
            records.append(bench.verdict_to_prediction(verdict, video_id))
        return records

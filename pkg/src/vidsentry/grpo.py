"""Group-relative policy math: advantage normalization, token-level clipped
surrogate, divergence penalty, and the combined objective.

Pure numerical functions over supplied rewards and per-token probability
ratios; the engine owns the math, never the model. Inner token sums run
through the kernel layer (compensated summation), so results are stable to
summation-order permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from . import _kernels
from .errors import DomainError

DEFAULT_EPSILON_CLIP = 0.2
DEFAULT_BETA = 0.04
DEFAULT_EPSILON_ADV = 1e-4

# exp() guard: log-prob deltas beyond this are clamped to keep ratios finite.
MAX_LOG_RATIO = 80.0


def _check_positive_finite(values: Sequence[float], name: str) -> None:
    for v in values:
        if not (v > 0.0 and math.isfinite(v)):
            raise DomainError(f"{name} must be strictly positive and finite, got {v!r}")


@dataclass(frozen=True)
class TokenRatioStream:
    """Per-token probability ratios for one rollout across both turns.

    ``ratios`` are current/old policy ratios; ``ref_ratios`` are
    reference/current. Both aligned, length >= 1.
    """

    ratios: tuple[float, ...]
    ref_ratios: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.ratios) < 1:
            raise DomainError("token streams must contain at least one token")
        if len(self.ratios) != len(self.ref_ratios):
            raise DomainError(
                f"ratio streams misaligned: {len(self.ratios)} vs {len(self.ref_ratios)}"
            )
        _check_positive_finite(self.ratios, "policy ratio")
        _check_positive_finite(self.ref_ratios, "reference ratio")

    def __len__(self) -> int:
        return len(self.ratios)


@dataclass(frozen=True)
class RolloutGroup:
    """G rollouts for one input: rewards, token streams, and constants."""

    rewards: tuple[float, ...]
    streams: tuple[TokenRatioStream, ...]
    epsilon_clip: float = DEFAULT_EPSILON_CLIP
    beta: float = DEFAULT_BETA
    epsilon_adv: float = DEFAULT_EPSILON_ADV

    def __post_init__(self) -> None:
        if len(self.rewards) < 2:
            raise DomainError(f"a rollout group needs G >= 2, got {len(self.rewards)}")
        if len(self.streams) != len(self.rewards):
            raise DomainError(
                f"{len(self.streams)} streams for {len(self.rewards)} rewards"
            )
        if self.epsilon_clip <= 0:
            raise DomainError("epsilon_clip must be positive")
        if self.beta < 0:
            raise DomainError("beta must be non-negative")
        if self.epsilon_adv < 0:
            raise DomainError("epsilon_adv must be non-negative")

    @property
    def size(self) -> int:
        return len(self.rewards)


def ratios_from_logprobs(
    logprobs_num: Sequence[float], logprobs_den: Sequence[float]
) -> tuple[float, ...]:
    """Per-token ``exp(lp_num - lp_den)`` with deltas clamped to +-80."""
    if len(logprobs_num) != len(logprobs_den):
        raise DomainError(
            f"log-prob streams misaligned: {len(logprobs_num)} vs {len(logprobs_den)}"
        )
    out = []
    for a, b in zip(logprobs_num, logprobs_den):
        delta = a - b
        if not math.isfinite(delta):
            raise DomainError(f"non-finite log-prob delta: {a!r} - {b!r}")
        delta = max(-MAX_LOG_RATIO, min(MAX_LOG_RATIO, delta))
        out.append(math.exp(delta))
    return tuple(out)


def group_advantages(rewards: Sequence[float], epsilon_adv: float = DEFAULT_EPSILON_ADV) -> list[float]:
    """Group-normalized advantages ``(R_i - mean) / (std + eps)``.

    Uses the population standard deviation. Identical rewards yield all-zero
    advantages even at ``epsilon_adv = 0``.
    """
    n = len(rewards)
    if n < 2:
        raise DomainError(f"advantage normalization needs at least 2 rewards, got {n}")
    if epsilon_adv < 0:
        raise DomainError("epsilon_adv must be non-negative")
    mean = math.fsum(rewards) / n
    variance = math.fsum((r - mean) ** 2 for r in rewards) / n
    denom = math.sqrt(variance) + epsilon_adv
    if denom == 0.0:
        return [0.0] * n
    return [(r - mean) / denom for r in rewards]


def clipped_surrogate(group: RolloutGroup, advantages: Sequence[float]) -> float:
    """Token-level clipped surrogate, averaged per token then per rollout."""
    if len(advantages) != group.size:
        raise DomainError(f"{len(advantages)} advantages for a group of {group.size}")
    per_rollout = [
        _kernels.clip_surrogate_sum(stream.ratios, adv, group.epsilon_clip) / len(stream)
        for stream, adv in zip(group.streams, advantages)
    ]
    return math.fsum(per_rollout) / group.size


def kl_penalty(group: RolloutGroup) -> float:
    """Mean per-token ``rho - log(rho) - 1`` estimator; non-negative."""
    per_rollout = [
        _kernels.kl_terms_sum(stream.ref_ratios) / len(stream) for stream in group.streams
    ]
    return math.fsum(per_rollout) / group.size


def grpo_objective(group: RolloutGroup) -> float:
    """Clipped surrogate minus the beta-weighted divergence penalty."""
    advantages = group_advantages(group.rewards, group.epsilon_adv)
    return clipped_surrogate(group, advantages) - group.beta * kl_penalty(group)

"""Deterministic frame-index sampling.

One normative rule maps a source frame sequence to a target sampling rate:
``index(k) = round_half_up(k * source_fps / target_fps)`` for
``k = 0 .. floor(duration * target_fps)``, clamped to the last frame and
deduplicated preserving order. A 5 s source at 4 fps yields 21 indices.

Arithmetic runs on exact rationals so equal-duration inputs can never
straddle a floor/round boundary through float noise.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Union

Rate = Union[int, float, Fraction]


def _round_half_up(x: Fraction) -> int:
    return int((2 * x + 1) // 2)


def sample_indices(frame_count: int, source_fps: Rate, target_fps: Rate) -> list[int]:
    """Frame indices selected when resampling ``frame_count`` frames to ``target_fps``.

    Args:
        frame_count: number of source frames (>= 1).
        source_fps: source frame rate (> 0).
        target_fps: desired sampling rate (> 0).

    Returns:
        Strictly increasing source frame indices; never empty.
    """
    if frame_count < 1:
        raise ValueError(f"frame_count must be >= 1, got {frame_count}")
    src = Fraction(source_fps)
    tgt = Fraction(target_fps)
    if src <= 0 or tgt <= 0:
        raise ValueError("frame rates must be positive")

    duration = Fraction(frame_count) / src
    k_max = int(duration * tgt)  # floor: Fraction.__int__ truncates toward zero
    step = src / tgt
    last = frame_count - 1

    indices: list[int] = []
    prev = -1
    for k in range(k_max + 1):
        idx = min(_round_half_up(Fraction(k) * step), last)
        if idx != prev:
            indices.append(idx)
            prev = idx
    return indices


def sampled_length(frame_count: int, source_fps: Rate, target_fps: Rate) -> int:
    """Length of the resampled sequence (the annotation-basis length at 4 fps)."""
    return len(sample_indices(frame_count, source_fps, target_fps))

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vidsentry.synth import JudgeScript, SynthWorld, generate_corpus, scripted_judge


@pytest.fixture(scope="session")
def world() -> SynthWorld:
    return generate_corpus(seed=42, normal=4, abnormal=6)


@pytest.fixture(scope="session")
def perfect_judge(world):
    return scripted_judge(JudgeScript("perfect"), world)


@pytest.fixture(scope="session")
def abnormal_id(world) -> str:
    return "abnormal-0000"


@pytest.fixture(scope="session")
def normal_id(world) -> str:
    return "normal-0000"

from __future__ import annotations

from pathlib import Path

import pytest

from passgrid.corpus import Paragraph, Problem, ProblemSet
from passgrid.fixtures import generate_problem_sets

DATA_DIR = Path(__file__).parent / "data"


def _distractors(tag: str, start: int, count: int) -> list[tuple[str, str]]:
    return [
        (f"Distractor {tag}.{j}", f"filler body {tag} {j} quarry basin")
        for j in range(start, start + count)
    ]


@pytest.fixture
def bridge_problem() -> Problem:
    """Hand-built two-hop fixture: gold answer only reachable via the bridge."""
    paragraphs = [
        ("First Hop", "First Hop starts here. BRIDGE=Second Hop; more text."),
        ("Second Hop", "Second Hop ends here. ANSWER=violet answer 9; tail."),
    ] + _distractors("x", 0, 8)
    return Problem(
        id="bp-1",
        category="bridge",
        question="Which value does the chain from First Hop reach?",
        gold_answer="violet answer 9",
        paragraphs=tuple(
            Paragraph(index=i, title=t, body=b, is_gold=i < 2)
            for i, (t, b) in enumerate(paragraphs)
        ),
        supporting_facts=(("First Hop", 0), ("Second Hop", 0)),
    )


@pytest.fixture
def comparison_problem() -> Problem:
    paragraphs = [
        ("Left Side", "Left Side records. ANSWER=shared token 3; pad."),
        ("Right Side", "Right Side records. ANSWER=shared token 3; pad."),
    ] + _distractors("y", 0, 8)
    return Problem(
        id="cp-1",
        category="comparison",
        question="Which value do Left Side and Right Side both record?",
        gold_answer="shared token 3",
        paragraphs=tuple(
            Paragraph(index=i, title=t, body=b, is_gold=i < 2)
            for i, (t, b) in enumerate(paragraphs)
        ),
        supporting_facts=(("Left Side", 0), ("Right Side", 0)),
    )


@pytest.fixture
def reasoning_problem() -> Problem:
    return Problem(
        id="rp-1",
        category="reasoning",
        question="What is 2 plus 2?",
        gold_answer="4",
    )


@pytest.fixture
def bridge_set() -> ProblemSet:
    return generate_problem_sets(0, 0, 4, seed=42)["bridge"]


@pytest.fixture
def comparison_set() -> ProblemSet:
    return generate_problem_sets(0, 4, 0, seed=42)["comparison"]

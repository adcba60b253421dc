"""Synthetic problem generation.

Bridge fixtures embed machine-readable markers: the first gold paragraph
carries "BRIDGE=<second title>;" and the second carries "ANSWER=<gold>;",
so the scripted two-hop policy can solve them at budget 2 but never at
budget 1, and the gold answer appears nowhere else in the corpus.
"""

from __future__ import annotations

import random

from .corpus import Paragraph, Problem, ProblemSet

_FILLER_WORDS = (
    "archive", "basin", "cobalt", "delta", "ember", "fathom", "granite",
    "harbor", "isthmus", "juniper", "kiln", "lattice", "meridian", "nimbus",
    "orchard", "pylon", "quarry", "rampart", "sediment", "tundra", "umber",
    "vertex", "wharf", "xylem", "yonder", "zephyr",
)
_ANSWER_ADJECTIVES = ("amber", "cerulean", "crimson", "ivory", "obsidian", "viridian")
_ANSWER_NOUNS = ("falcon", "garnet", "lantern", "obelisk", "saffron", "trireme")


def _rng(seed: int, category: str, i: int) -> random.Random:
    # String seeding hashes via sha512, so streams are stable across runs
    # and independent of how many problems of other categories exist.
    return random.Random(f"{seed}:{category}:{i}")


def _filler(rng: random.Random, n_words: int) -> str:
    return " ".join(rng.choice(_FILLER_WORDS) for _ in range(n_words))


def _answer_phrase(rng: random.Random, i: int) -> str:
    return f"{rng.choice(_ANSWER_ADJECTIVES)} {rng.choice(_ANSWER_NOUNS)} {i}"


def _assemble_paragraphs(
    rng: random.Random, golds: list[tuple[str, str]], n_distractors: int, tag: str
) -> tuple[Paragraph, ...]:
    entries: list[tuple[str, str, bool]] = [(t, b, True) for t, b in golds]
    for j in range(n_distractors):
        entries.append(
            (f"Distractor {tag}.{j}", _filler(rng, rng.randint(8, 14)), False)
        )
    rng.shuffle(entries)
    return tuple(
        Paragraph(index=i, title=title, body=body, is_gold=gold)
        for i, (title, body, gold) in enumerate(entries)
    )


def make_bridge_problem(i: int, seed: int) -> Problem:
    rng = _rng(seed, "bridge", i)
    t1 = f"Entity A{i}"
    t2 = f"Entity B{i}"
    answer = _answer_phrase(rng, i)
    body1 = (
        f"{t1} opens the chain. {_filler(rng, 4)}. "
        f"BRIDGE={t2}; {_filler(rng, 4)}."
    )
    body2 = (
        f"{t2} closes the chain. {_filler(rng, 4)}. "
        f"ANSWER={answer}; {_filler(rng, 4)}."
    )
    return Problem(
        id=f"bridge-{i:04d}",
        category="bridge",
        question=(
            f"Which recorded value does the chain starting at {t1} lead to?"
        ),
        gold_answer=answer,
        paragraphs=_assemble_paragraphs(rng, [(t1, body1), (t2, body2)], 8, f"b{i}"),
        supporting_facts=((t1, 0), (t2, 0)),
    )


def make_comparison_problem(i: int, seed: int) -> Problem:
    rng = _rng(seed, "comparison", i)
    t1 = f"Subject L{i}"
    t2 = f"Subject R{i}"
    answer = _answer_phrase(rng, i)
    body1 = f"{t1} records a value. {_filler(rng, 4)}. ANSWER={answer}; {_filler(rng, 3)}."
    body2 = f"{t2} records a value. {_filler(rng, 4)}. ANSWER={answer}; {_filler(rng, 3)}."
    return Problem(
        id=f"comparison-{i:04d}",
        category="comparison",
        question=f"Which value do {t1} and {t2} both record?",
        gold_answer=answer,
        paragraphs=_assemble_paragraphs(rng, [(t1, body1), (t2, body2)], 8, f"c{i}"),
        supporting_facts=((t1, 0), (t2, 0)),
    )


def make_reasoning_problem(i: int, seed: int) -> Problem:
    rng = _rng(seed, "reasoning", i)
    a, b = rng.randint(10, 99), rng.randint(10, 99)
    return Problem(
        id=f"reasoning-{i:04d}",
        category="reasoning",
        question=f"What is {a} plus {b}?",
        gold_answer=str(a + b),
    )


def generate_problem_sets(
    n_reasoning: int,
    n_comparison: int,
    n_bridge: int,
    seed: int,
    split: str = "test",
) -> dict[str, ProblemSet]:
    """Generate per-category problem sets, deterministic in the seed."""
    if min(n_reasoning, n_comparison, n_bridge) < 0:
        raise ValueError("problem counts must be >= 0")
    sets: dict[str, ProblemSet] = {}
    if n_reasoning:
        sets["reasoning"] = ProblemSet(
            tuple(make_reasoning_problem(i, seed) for i in range(n_reasoning)),
            split=split,
            seed=seed,
        )
    if n_comparison:
        sets["comparison"] = ProblemSet(
            tuple(make_comparison_problem(i, seed) for i in range(n_comparison)),
            split=split,
            seed=seed,
        )
    if n_bridge:
        sets["bridge"] = ProblemSet(
            tuple(make_bridge_problem(i, seed) for i in range(n_bridge)),
            split=split,
            seed=seed,
        )
    return sets

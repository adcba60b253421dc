"""Problem sets: loading, validation, split hygiene, expert trajectories.

Retrieval problems follow the distractor format: ten paragraphs, two of them
gold, plus supporting-fact annotations naming the gold paragraph titles.
Tool-free problems carry no paragraphs at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import DataError
from .transcript import Action, Step, Trajectory, format_observation

CATEGORIES = ("reasoning", "comparison", "bridge")
RETRIEVAL_CATEGORIES = ("comparison", "bridge")
SPLITS = ("train", "test")

EXPERT_POLICY_ID = "expert"
PARAGRAPHS_PER_PROBLEM = 10
GOLD_PER_PROBLEM = 2


@dataclass(frozen=True)
class Paragraph:
    index: int
    title: str
    body: str
    is_gold: bool

    def __post_init__(self) -> None:
        if self.index < 0:
            raise DataError("paragraph index must be >= 0")
        if not self.title.strip():
            raise DataError("paragraph title must be non-empty")


@dataclass(frozen=True)
class Problem:
    id: str
    category: str
    question: str
    gold_answer: str
    paragraphs: tuple[Paragraph, ...] = ()
    supporting_facts: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "paragraphs", tuple(self.paragraphs))
        object.__setattr__(
            self,
            "supporting_facts",
            tuple((str(t), int(i)) for t, i in self.supporting_facts),
        )
        validate_problem(self)

    def gold_paragraphs(self) -> tuple[Paragraph, ...]:
        return tuple(p for p in self.paragraphs if p.is_gold)

    def gold_paragraph_by_title(self, title: str) -> Paragraph:
        for p in self.paragraphs:
            if p.is_gold and p.title == title:
                return p
        raise DataError(f"problem {self.id!r}: no gold paragraph titled {title!r}")


def validate_problem(problem: Problem) -> None:
    """Check the per-problem invariants, naming the offending problem id."""
    pid = problem.id
    if problem.category not in CATEGORIES:
        raise DataError(f"problem {pid!r}: unknown category {problem.category!r}")
    indexes = [p.index for p in problem.paragraphs]
    if len(set(indexes)) != len(indexes):
        raise DataError(f"problem {pid!r}: duplicate paragraph index")
    if problem.category == "reasoning":
        if problem.paragraphs:
            raise DataError(f"problem {pid!r}: reasoning problems carry no paragraphs")
        return
    if len(problem.paragraphs) != PARAGRAPHS_PER_PROBLEM:
        raise DataError(
            f"problem {pid!r}: paragraph count is {len(problem.paragraphs)}, "
            f"expected exactly {PARAGRAPHS_PER_PROBLEM}"
        )
    gold_titles = {p.title for p in problem.paragraphs if p.is_gold}
    n_gold = sum(1 for p in problem.paragraphs if p.is_gold)
    if n_gold != GOLD_PER_PROBLEM:
        raise DataError(
            f"problem {pid!r}: gold paragraph count is {n_gold}, "
            f"expected exactly {GOLD_PER_PROBLEM}"
        )
    for title, _ in problem.supporting_facts:
        if title not in gold_titles:
            raise DataError(
                f"problem {pid!r}: supporting-fact title {title!r} "
                "matches no gold paragraph"
            )


@dataclass(frozen=True)
class ProblemSet:
    problems: tuple[Problem, ...]
    split: str = "test"
    seed: int = 42

    def __post_init__(self) -> None:
        object.__setattr__(self, "problems", tuple(self.problems))
        if self.split not in SPLITS:
            raise DataError(f"unknown split {self.split!r}")
        ids = [p.id for p in self.problems]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate problem ids: {dupes}")

    def by_id(self) -> dict[str, Problem]:
        return {p.id: p for p in self.problems}

    def categories(self) -> tuple[str, ...]:
        seen: list[str] = []
        for p in self.problems:
            if p.category not in seen:
                seen.append(p.category)
        return tuple(seen)


def _require(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise DataError(f"{where}: missing field {key!r}")
    return obj[key]


def _problem_from_json(obj: dict, where: str) -> Problem:
    pid = str(_require(obj, "id", where))
    paragraphs = []
    for j, para in enumerate(obj.get("paragraphs", [])):
        pwhere = f"{where}.paragraphs[{j}]"
        if not isinstance(para, dict):
            raise DataError(f"{pwhere}: expected an object")
        paragraphs.append(
            Paragraph(
                index=j,
                title=str(_require(para, "title", pwhere)),
                body=str(_require(para, "text", pwhere)),
                is_gold=bool(_require(para, "gold", pwhere)),
            )
        )
    facts = []
    for j, fact in enumerate(obj.get("supporting_facts", [])):
        fwhere = f"{where}.supporting_facts[{j}]"
        if not isinstance(fact, (list, tuple)) or len(fact) != 2:
            raise DataError(f"{fwhere}: expected a [title, sentence_index] pair")
        facts.append((str(fact[0]), int(fact[1])))
    return Problem(
        id=pid,
        category=str(_require(obj, "category", where)),
        question=str(_require(obj, "question", where)),
        gold_answer=str(_require(obj, "answer", where)),
        paragraphs=tuple(paragraphs),
        supporting_facts=tuple(facts),
    )


def load_problem_set(path: str | Path) -> ProblemSet:
    """Load and validate a problem-set JSON file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(
            f"{path}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise DataError(f"{path}: top level must be a JSON object")
    problems_raw = _require(raw, "problems", str(path))
    if not isinstance(problems_raw, list):
        raise DataError(f"{path}: 'problems' must be a list")
    problems = [
        _problem_from_json(obj, f"{path}:problems[{i}]")
        for i, obj in enumerate(problems_raw)
    ]
    return ProblemSet(
        problems=tuple(problems),
        split=str(raw.get("split", "test")),
        seed=int(raw.get("seed", 42)),
    )


def problem_set_to_json(problem_set: ProblemSet) -> dict:
    return {
        "problems": [
            {
                "id": p.id,
                "category": p.category,
                "question": p.question,
                "answer": p.gold_answer,
                "paragraphs": [
                    {"title": para.title, "text": para.body, "gold": para.is_gold}
                    for para in p.paragraphs
                ],
                "supporting_facts": [[t, i] for t, i in p.supporting_facts],
            }
            for p in problem_set.problems
        ],
        "split": problem_set.split,
        "seed": problem_set.seed,
    }


def save_problem_set(problem_set: ProblemSet, path: str | Path) -> None:
    """Write the canonical JSON representation; load(save(x)) == x."""
    text = json.dumps(problem_set_to_json(problem_set), indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


@dataclass(frozen=True)
class OverlapRecord:
    train_id: str
    test_id: str
    reason: str  # "id" or "question"


def verify_disjoint(train: ProblemSet, test: ProblemSet) -> list[OverlapRecord]:
    """Report every train/test pair sharing an id or exact question text.

    An empty list means the splits are disjoint. Overlap is a report, not an
    error: callers decide what to do about it.
    """
    overlaps: list[OverlapRecord] = []
    for a in train.problems:
        for b in test.problems:
            if a.id == b.id:
                overlaps.append(OverlapRecord(a.id, b.id, "id"))
            elif a.question == b.question:
                overlaps.append(OverlapRecord(a.id, b.id, "question"))
    return overlaps


def _distinct_support_titles(problem: Problem) -> list[str]:
    return list(dict.fromkeys(title for title, _ in problem.supporting_facts))


def build_expert_trajectory(problem: Problem) -> Trajectory:
    """Build the gold two-hop trajectory from supporting-fact annotations.

    The search queries are the gold paragraph titles in supporting-fact
    order; the interleaved thoughts come from fixed per-category templates,
    and the final answer is the gold answer. Observations are filled from
    the gold paragraphs directly, so replaying the trajectory against the
    retrieval environment must reproduce them.
    """
    if problem.category == "reasoning":
        raise DataError(
            f"problem {problem.id!r}: unsupported category 'reasoning' "
            "for expert trajectory construction"
        )
    titles = _distinct_support_titles(problem)
    if not 1 <= len(titles) <= 2:
        raise DataError(
            f"problem {problem.id!r}: malformed annotation, "
            f"{len(titles)} distinct gold titles (expected 2, or 1 when equal)"
        )
    paragraphs = [problem.gold_paragraph_by_title(t) for t in titles]
    observations = [format_observation(p.title, p.body) for p in paragraphs]
    gold = problem.gold_answer

    steps: list[Step] = []
    if problem.category == "comparison":
        t1 = titles[0]
        t2 = titles[1] if len(titles) == 2 else titles[0]
        steps.append(
            Step(
                Action(
                    "thought",
                    f"I need to compare {t1} and {t2}. Let me search for {t1} first.",
                )
            )
        )
        steps.append(Step(Action("search", t1), observations[0]))
        if len(titles) == 2:
            steps.append(Step(Action("thought", f"Now let me search for {t2}.")))
            steps.append(Step(Action("search", t2), observations[1]))
        steps.append(
            Step(
                Action(
                    "thought",
                    f"Based on the information, the answer is {gold}.",
                )
            )
        )
    else:
        t1 = titles[0]
        steps.append(
            Step(
                Action(
                    "thought",
                    f'I need to find the answer to "{problem.question}". '
                    f"Let me start by searching for {t1}.",
                )
            )
        )
        steps.append(Step(Action("search", t1), observations[0]))
        if len(titles) == 2:
            t2 = titles[1]
            steps.append(
                Step(Action("thought", f"From this, I learn that {t2} is relevant."))
            )
            steps.append(Step(Action("search", t2), observations[1]))
        steps.append(
            Step(Action("thought", f"Now I can answer. The answer is {gold}."))
        )
    steps.append(Step(Action("answer", gold)))
    return Trajectory(
        problem_id=problem.id,
        policy_id=EXPERT_POLICY_ID,
        budget_t=len(titles),
        sample_index=0,
        seed=0,
        steps=tuple(steps),
        success=True,
    )

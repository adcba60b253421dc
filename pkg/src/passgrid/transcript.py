"""Transcript grammar for tool-use episodes.

A transcript is a line-oriented rendering of one episode: the agent emits
``Thought:``, ``Search:`` and ``Answer:`` lines, and the environment appends
an ``Observation:`` line after every search. This module owns the grammar
(render/parse round-trip), answer and query normalization, exact match, and
the span segmentation used by the perplexity analysis.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, replace
from typing import Literal

from .errors import DataError, TranscriptError

ActionKind = Literal["thought", "search", "answer"]
SpanRole = Literal["search", "reason", "observation"]

THOUGHT_PREFIX = "Thought: "
SEARCH_PREFIX = "Search: "
ANSWER_PREFIX = "Answer: "
OBSERVATION_PREFIX = "Observation: "

_ACTION_KINDS = ("thought", "search", "answer")
_ARTICLES = frozenset({"a", "an", "the"})
_NEWLINE_RUN = re.compile(r"[\r\n]+")


def collapse_newlines(text: str) -> str:
    """Replace any run of newline characters with a single space."""
    return _NEWLINE_RUN.sub(" ", text)


def format_observation(title: str, body: str) -> str:
    """Render a retrieved paragraph as a single observation payload."""
    return f"{collapse_newlines(title)} | {collapse_newlines(body)}"


@dataclass(frozen=True)
class Action:
    """One agent emission: a thought, a search query, or a final answer."""

    kind: ActionKind
    text: str

    def __post_init__(self) -> None:
        if self.kind not in _ACTION_KINDS:
            raise DataError(f"unknown action kind {self.kind!r}")
        if not self.text.strip():
            raise DataError(f"{self.kind} action has empty text")


@dataclass(frozen=True)
class Step:
    """An action plus, for searches only, the observation it triggered."""

    action: Action
    observation: str | None = None

    def __post_init__(self) -> None:
        has_obs = self.observation is not None
        if has_obs != (self.action.kind == "search"):
            raise DataError(
                "observation must be present exactly when the action is a search"
            )


@dataclass(frozen=True)
class Trajectory:
    """One full episode of a policy on a problem.

    ``budget_t`` is the maximum number of search rounds the episode was
    allowed; ``success`` records whether the final answer exact-matched the
    gold answer.
    """

    problem_id: str
    policy_id: str
    budget_t: int
    sample_index: int
    seed: int
    steps: tuple[Step, ...]
    success: bool

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.budget_t < 0:
            raise DataError("budget_t must be >= 0")
        if self.sample_index < 0:
            raise DataError("sample_index must be >= 0")
        n_search = sum(1 for s in self.steps if s.action.kind == "search")
        if n_search > self.budget_t:
            raise DataError(
                f"trajectory has {n_search} searches, more than budget_t={self.budget_t}"
            )
        answer_positions = [
            i for i, s in enumerate(self.steps) if s.action.kind == "answer"
        ]
        if len(answer_positions) > 1:
            raise DataError("trajectory has more than one answer step")
        if answer_positions and answer_positions[0] != len(self.steps) - 1:
            raise DataError("answer step must be the last step")

    @property
    def final_answer(self) -> str | None:
        if self.steps and self.steps[-1].action.kind == "answer":
            return self.steps[-1].action.text
        return None

    @property
    def n_searches(self) -> int:
        return sum(1 for s in self.steps if s.action.kind == "search")

    def search_queries(self) -> tuple[str, ...]:
        return tuple(
            s.action.text for s in self.steps if s.action.kind == "search"
        )


@dataclass(frozen=True)
class Span:
    """A labelled character range of the rendered transcript.

    Spans cover exactly the action/observation payloads; the line prefixes
    and newlines between them are protocol scaffolding and belong to no span.
    """

    role: SpanRole
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise DataError("span start must not exceed end")


def _lines(trajectory: Trajectory) -> list[tuple[str, SpanRole, str]]:
    """Expand a trajectory into (prefix, role, payload) rendered lines."""
    lines: list[tuple[str, SpanRole, str]] = []
    for step in trajectory.steps:
        action = step.action
        text = collapse_newlines(action.text)
        if action.kind == "thought":
            lines.append((THOUGHT_PREFIX, "reason", text))
        elif action.kind == "answer":
            lines.append((ANSWER_PREFIX, "reason", text))
        else:
            lines.append((SEARCH_PREFIX, "search", text))
            obs = collapse_newlines(step.observation or "")
            lines.append((OBSERVATION_PREFIX, "observation", obs))
    return lines


def render_transcript(trajectory: Trajectory) -> str:
    """Render a trajectory as transcript text, one line per action/observation."""
    return "\n".join(prefix + payload for prefix, _, payload in _lines(trajectory))


def segment_spans(trajectory: Trajectory) -> list[Span]:
    """Locate every payload of the rendered transcript as a role-labelled span.

    Search payloads get role ``search``, thought and answer payloads get role
    ``reason``, observation payloads get role ``observation``. Spans are
    disjoint, ordered, and together with the scaffolding (prefixes and
    newlines) they tile the rendered text exactly.
    """
    spans: list[Span] = []
    offset = 0
    lines = _lines(trajectory)
    for i, (prefix, role, payload) in enumerate(lines):
        start = offset + len(prefix)
        spans.append(Span(role, start, start + len(payload)))
        offset = start + len(payload)
        if i != len(lines) - 1:
            offset += 1  # newline between lines
    return spans


def parse_transcript(text: str) -> tuple[Step, ...]:
    """Parse transcript text back into steps.

    Lines before the first recognized prefix are ignored as preamble. After
    that, the grammar is strict: observations must directly follow a search,
    nothing may follow the answer, and every search must be observed.
    """
    steps: list[Step] = []
    pending_search: Action | None = None
    answered = False
    in_preamble = True
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith(OBSERVATION_PREFIX):
            if pending_search is None:
                raise TranscriptError(
                    f"line {lineno}: observation does not follow a search"
                )
            steps.append(Step(pending_search, line[len(OBSERVATION_PREFIX):]))
            pending_search = None
            continue
        prefix_kind: ActionKind | None = None
        if line.startswith(THOUGHT_PREFIX):
            prefix_kind = "thought"
            payload = line[len(THOUGHT_PREFIX):]
        elif line.startswith(SEARCH_PREFIX):
            prefix_kind = "search"
            payload = line[len(SEARCH_PREFIX):]
        elif line.startswith(ANSWER_PREFIX):
            prefix_kind = "answer"
            payload = line[len(ANSWER_PREFIX):]
        if prefix_kind is None:
            if in_preamble:
                continue
            raise TranscriptError(f"line {lineno}: unrecognized line {line!r}")
        in_preamble = False
        if pending_search is not None:
            raise TranscriptError(f"line {lineno}: search is missing its observation")
        if answered:
            raise TranscriptError(f"line {lineno}: {prefix_kind} after answer")
        try:
            action = Action(prefix_kind, payload)
        except DataError as exc:
            raise TranscriptError(f"line {lineno}: {exc}") from exc
        if prefix_kind == "search":
            pending_search = action
        else:
            steps.append(Step(action))
            answered = prefix_kind == "answer"
    if pending_search is not None:
        raise TranscriptError("transcript ends with a search missing its observation")
    if not steps:
        raise TranscriptError("empty transcript: no recognized lines")
    return tuple(steps)


def _strip_token_punct(token: str) -> str:
    """Strip leading/trailing punctuation (Unicode P*) from one token."""
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def _normalize_tokens(text: str, *, drop_articles: bool) -> str:
    tokens = []
    for raw in text.lower().split():
        token = _strip_token_punct(raw)
        if not token:
            continue
        if drop_articles and token in _ARTICLES:
            continue
        tokens.append(token)
    return " ".join(tokens)


def normalize_answer(s: str) -> str:
    """Normalize an answer: lowercase, drop whole-word articles, strip
    surrounding punctuation, collapse whitespace.

    Punctuation internal to a token is kept, so "U.S.A." becomes "u.s.a".
    The result may be empty. Idempotent.
    """
    return _normalize_tokens(s, drop_articles=True)


def normalize_query(q: str) -> str:
    """Normalize a search query: like answers, but articles are kept."""
    return _normalize_tokens(q, drop_articles=False)


def exact_match(prediction: str, gold: str) -> bool:
    """True iff the normalized prediction equals the normalized gold answer."""
    return normalize_answer(prediction) == normalize_answer(gold)


def query_sequence_key(trajectory: Trajectory) -> tuple[str, ...]:
    """The ordered tuple of normalized search queries, the strategy identity."""
    return tuple(normalize_query(q) for q in trajectory.search_queries())


def truncate_trajectory(
    trajectory: Trajectory, budget_t: int, gold_answer: str
) -> Trajectory:
    """Cut a trajectory to its first ``budget_t`` search rounds and re-score.

    Steps from the (budget_t+1)-th search onward are dropped; success is
    recomputed from whatever final answer survives.
    """
    kept: list[Step] = []
    searches = 0
    for step in trajectory.steps:
        if step.action.kind == "search":
            if searches >= budget_t:
                break
            searches += 1
        kept.append(step)
    answer = (
        kept[-1].action.text
        if kept and kept[-1].action.kind == "answer"
        else None
    )
    success = answer is not None and exact_match(answer, gold_answer)
    return replace(
        trajectory, budget_t=budget_t, steps=tuple(kept), success=success
    )

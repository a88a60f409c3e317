"""Premise-aware best-first proof search with replay and an exhaustive oracle.

Environments and tactic generators are small protocols so tests can drive
search with table-backed fixtures: a JSON file listing states, labeled
transitions with log-probabilities, and per-theorem initial states. A
transition to the marker "PROVED" closes the proof.

Search keeps a max-priority frontier on cumulative log-probability. Goal
transitions enter the frontier as terminal entries and the proof is returned
when one is popped, which for step costs of -log p >= 0 makes the returned
proof maximal in total log-probability.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .corpus import Corpus, Premise, Theorem
from .errors import (
    CorruptDocument,
    EnvironmentFailure,
    IoFailure,
    StaleIndex,
    UnknownFile,
)
from .retriever import EmbeddingIndex, EmbeddingModel

GOAL = "PROVED"

NEXT = "next"
PROVED = "proved"
INVALID = "invalid"


@dataclass(frozen=True)
class TacticOutcome:
    kind: str  # next | proved | invalid
    state: str | None = None

    @classmethod
    def next_state(cls, state: str) -> TacticOutcome:
        return cls(kind=NEXT, state=state)

    @classmethod
    def proved(cls) -> TacticOutcome:
        return cls(kind=PROVED)

    @classmethod
    def invalid(cls) -> TacticOutcome:
        return cls(kind=INVALID)


class ProofEnvironment(Protocol):
    def initial_state(self, theorem: Theorem) -> str: ...

    def apply(self, state: str, tactic: str) -> TacticOutcome: ...


class TacticGenerator(Protocol):
    def propose(
        self, state: str, premises: list[Premise] | None, n: int
    ) -> list[tuple[str, float]]: ...


# -- dependency graph and retrieval ------------------------------------------

@dataclass
class DependencyGraph:
    """Reflexive-transitive closure of the corpus import relation."""

    closure: dict[str, frozenset[str]]

    def reachable(self, path: str) -> frozenset[str]:
        if path not in self.closure:
            raise UnknownFile(path)
        return self.closure[path]


def build_dependency_graph(corpus: Corpus) -> DependencyGraph:
    closure: dict[str, frozenset[str]] = {}
    for f in corpus.files:  # topological order: imports are already closed
        reach: set[str] = {f.path}
        for target in f.imports:
            reach.update(closure[target])
        closure[f.path] = frozenset(reach)
    return DependencyGraph(closure=closure)


def accessible_premises(
    graph: DependencyGraph, corpus: Corpus, theorem: Theorem
) -> list[Premise]:
    """Premises legal to use in the theorem's proof.

    Everything from transitively imported files, plus premises of the
    theorem's own file that end before the theorem starts. Ordered by file
    topological order, then position.
    """
    reach = graph.reachable(theorem.file_path)
    out: list[Premise] = []
    for f in corpus.files:
        if f.path not in reach:
            continue
        if f.path == theorem.file_path:
            own = [p for p in f.premises if p.end < theorem.start]
            out.extend(sorted(own, key=lambda p: p.start))
        else:
            out.extend(sorted(f.premises, key=lambda p: p.start))
    return out


def retrieve_premises(
    model: EmbeddingModel,
    index: EmbeddingIndex,
    state: str,
    accessible: list[Premise],
    fraction: float = 0.25,
    max_n: int = 100,
) -> list[Premise]:
    """Top premises by cosine similarity among the accessible ones.

    Keeps ceil(fraction * N) of the N accessible premises, then at most
    max_n. Ties break by ascending premise key.
    """
    if not accessible:
        return []
    if model.version_hash != index.version_hash:
        raise StaleIndex(
            f"index built at {index.version_hash}, model is {model.version_hash}"
        )
    state_emb = model.embed(state)
    scored = []
    for p in accessible:
        row = index.row_of.get(p.key)
        if row is None:
            raise StaleIndex(f"premise {p.key!r} missing from index")
        scored.append((-float(index.matrix[row] @ state_emb), p.key, p))
    scored.sort(key=lambda t: (t[0], t[1]))
    keep = min(max_n, math.ceil(fraction * len(accessible)))
    return [p for _, _, p in scored[:keep]]


# -- table-backed fixtures -----------------------------------------------------

@dataclass(frozen=True)
class _Edge:
    source: str
    tactic: str
    log_prob: float
    target: str  # GOAL for closing transitions
    requires_premise: str | None = None
    fails: bool = False


@dataclass
class TableFixture:
    """Transition table shared by the fixture environment and generator."""

    initial: dict[str, str]  # theorem key_str -> initial state
    edges: list[_Edge]
    by_source: dict[str, list[_Edge]] = field(init=False, repr=False)
    lookup: dict[tuple[str, str], _Edge] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.by_source = {}
        self.lookup = {}
        for e in self.edges:
            key = (e.source, e.tactic)
            if key in self.lookup:
                raise CorruptDocument(f"duplicate transition {key!r}")
            if e.log_prob > 0.0:
                raise CorruptDocument(f"positive log-probability on {key!r}")
            self.lookup[key] = e
            self.by_source.setdefault(e.source, []).append(e)

    def to_json(self) -> dict:
        states = sorted({e.source for e in self.edges}
                        | {e.target for e in self.edges if e.target != GOAL}
                        | set(self.initial.values()))
        edges = []
        for e in self.edges:
            obj: dict = {
                "from": e.source,
                "tactic": e.tactic,
                "log_prob": e.log_prob,
                "to": e.target,
            }
            if e.requires_premise is not None:
                obj["requires_premise"] = e.requires_premise
            if e.fails:
                obj["fails"] = True
            edges.append(obj)
        return {"states": states, "initial": dict(sorted(self.initial.items())), "edges": edges}

    @classmethod
    def from_json(cls, doc: object) -> TableFixture:
        if not isinstance(doc, dict) or "initial" not in doc or "edges" not in doc:
            raise CorruptDocument("fixture needs initial and edges")
        try:
            edges = [
                _Edge(
                    source=str(e["from"]),
                    tactic=str(e["tactic"]),
                    log_prob=float(e["log_prob"]),
                    target=str(e["to"]),
                    requires_premise=e.get("requires_premise"),
                    fails=bool(e.get("fails", False)),
                )
                for e in doc["edges"]
            ]
            initial = {str(k): str(v) for k, v in doc["initial"].items()}
        except (KeyError, TypeError, ValueError) as e:
            raise CorruptDocument(f"bad fixture edge: {e}") from e
        return cls(initial=initial, edges=edges)

    def save(self, path: str | Path) -> None:
        try:
            Path(path).write_text(
                json.dumps(self.to_json(), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )
        except OSError as e:
            raise IoFailure(f"cannot write fixture to {path}: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> TableFixture:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise IoFailure(f"cannot read fixture from {path}: {e}") from e
        try:
            return cls.from_json(json.loads(text))
        except json.JSONDecodeError as e:
            raise CorruptDocument(f"fixture is not valid JSON: {e.msg}") from e


class TableEnvironment:
    def __init__(self, fixture: TableFixture) -> None:
        self.fixture = fixture

    def initial_state(self, theorem: Theorem) -> str:
        state = self.fixture.initial.get(theorem.key_str)
        if state is None:
            raise EnvironmentFailure(f"no initial state for {theorem.key_str!r}")
        return state

    def apply(self, state: str, tactic: str) -> TacticOutcome:
        edge = self.fixture.lookup.get((state, tactic))
        if edge is None:
            return TacticOutcome.invalid()
        if edge.fails:
            raise EnvironmentFailure(f"transition {state!r} -{tactic!r}-> crashed")
        if edge.target == GOAL:
            return TacticOutcome.proved()
        return TacticOutcome.next_state(edge.target)


class TableGenerator:
    """Proposes the table's outgoing transitions, most probable first.

    An edge gated on a premise is only proposed when that premise was
    retrieved; passing premises=None disables gating (the oracle's view).
    """

    def __init__(self, fixture: TableFixture) -> None:
        self.fixture = fixture

    def propose(
        self, state: str, premises: list[Premise] | None, n: int
    ) -> list[tuple[str, float]]:
        available = None if premises is None else {p.full_name for p in premises}
        out = []
        for e in self.fixture.by_source.get(state, ()):
            if e.requires_premise is not None and available is not None \
                    and e.requires_premise not in available:
                continue
            out.append((e.tactic, e.log_prob))
        out.sort(key=lambda t: (-t[1], t[0]))
        return out[:n]


# -- search -----------------------------------------------------------------------

RetrievalFn = Callable[[str], list[Premise]]


@dataclass(frozen=True)
class SearchBudget:
    time_ms: float = 600_000.0
    max_expansions: int | None = None
    candidates: int = 64


@dataclass
class SearchResult:
    status: str  # proved | exhausted | timeout
    proof: list[str] | None
    total_log_prob: float | None
    expansions: int
    elapsed_ms: float
    env_failures: int


class TickClock:
    """Deterministic stand-in for time.monotonic: one millisecond per call."""

    def __init__(self) -> None:
        self.ticks = 0

    def __call__(self) -> float:
        self.ticks += 1
        return self.ticks * 1e-3


def best_first_search(
    env: ProofEnvironment,
    generator: TacticGenerator,
    theorem: Theorem,
    retrieval_fn: RetrievalFn | None = None,
    budget: SearchBudget = SearchBudget(),
    clock: Callable[[], float] | None = None,
) -> SearchResult:
    """Expand highest cumulative log-probability first; prune repeat states.

    A revisited state survives only with a better score. Environment crashes
    count as failures and the edge is skipped.
    """
    import heapq

    clock = clock or time.monotonic
    t0 = clock()
    elapsed = lambda: (clock() - t0) * 1000.0

    root = env.initial_state(theorem)
    counter = 0
    # entries: (negated score, insertion counter, state or None for goal, path)
    frontier: list[tuple[float, int, str | None, tuple[str, ...]]] = [
        (0.0, counter, root, ())
    ]
    best_score: dict[str | None, float] = {root: 0.0}
    expansions = 0
    failures = 0

    while frontier:
        if elapsed() > budget.time_ms:
            return SearchResult("timeout", None, None, expansions, elapsed(), failures)
        neg, _, state, path = heapq.heappop(frontier)
        score = -neg
        if score < best_score.get(state, -math.inf):
            continue  # superseded entry
        if state is None:
            return SearchResult("proved", list(path), score, expansions, elapsed(), failures)
        if budget.max_expansions is not None and expansions >= budget.max_expansions:
            return SearchResult("timeout", None, None, expansions, elapsed(), failures)
        expansions += 1
        premises = retrieval_fn(state) if retrieval_fn is not None else None
        for tactic, log_prob in generator.propose(state, premises, budget.candidates):
            if log_prob > 0.0:
                raise ValueError(f"generator proposed log-probability {log_prob} > 0")
            try:
                outcome = env.apply(state, tactic)
            except EnvironmentFailure:
                failures += 1
                continue
            if outcome.kind == INVALID:
                continue
            new_score = score + log_prob
            key = None if outcome.kind == PROVED else outcome.state
            if key in best_score and best_score[key] >= new_score:
                continue
            best_score[key] = new_score
            counter += 1
            heapq.heappush(frontier, (-new_score, counter, key, path + (tactic,)))
    return SearchResult("exhausted", None, None, expansions, elapsed(), failures)


def replay_proof(env: ProofEnvironment, theorem: Theorem, proof: list[str]) -> bool:
    """True iff applying the tactics in order lands exactly on a proved goal."""
    try:
        state = env.initial_state(theorem)
        for i, tactic in enumerate(proof):
            outcome = env.apply(state, tactic)
            if outcome.kind == INVALID:
                return False
            if outcome.kind == PROVED:
                return i == len(proof) - 1
            assert outcome.state is not None
            state = outcome.state
    except EnvironmentFailure:
        return False
    return False


def brute_force_prove(
    env: ProofEnvironment,
    generator: TacticGenerator,
    theorem: Theorem,
    depth_limit: int,
    retrieval_fn: RetrievalFn | None = None,
    candidates: int = 64,
) -> list[tuple[tuple[str, ...], float]]:
    """All proofs of length <= depth_limit, by exhaustive depth-first walk."""
    results: list[tuple[tuple[str, ...], float]] = []

    def dfs(state: str, path: tuple[str, ...], score: float) -> None:
        if len(path) >= depth_limit:
            return
        premises = retrieval_fn(state) if retrieval_fn is not None else None
        for tactic, log_prob in generator.propose(state, premises, candidates):
            if log_prob > 0.0:
                raise ValueError(f"generator proposed log-probability {log_prob} > 0")
            try:
                outcome = env.apply(state, tactic)
            except EnvironmentFailure:
                continue
            if outcome.kind == INVALID:
                continue
            if outcome.kind == PROVED:
                results.append((path + (tactic,), score + log_prob))
            else:
                assert outcome.state is not None
                dfs(outcome.state, path + (tactic,), score + log_prob)

    dfs(env.initial_state(theorem), (), 0.0)
    return results

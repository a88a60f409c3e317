"""Premise corpora, traced theorems, and dataset splits.

A corpus is a set of premise files connected by imports. Files arrive as one
JSON object per line:

    {"path": ..., "imports": [...], "premises": [{"full_name": ..., "code": ...,
     "start": [line, col], "end": [line, col], "kind": ...}]}

Theorems carry their traced tactics and travel as JSON arrays. Splitting into
train/val/test is seeded and reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DuplicatePath,
    ImportCycle,
    InvalidRecord,
    MalformedLine,
    TooFewTheorems,
    UnknownImport,
)

Pos = tuple[int, int]

KIND_DEFINITION = "definition"
KIND_THEOREM_LIKE = "theorem-like"
PREMISE_KINDS = (KIND_DEFINITION, KIND_THEOREM_LIKE)

STATUS_PROVEN = "proven"
STATUS_SORRY = "sorry_unproven"
STATUS_SORRY_PROVEN = "sorry_proven"
THEOREM_STATUSES = (STATUS_PROVEN, STATUS_SORRY, STATUS_SORRY_PROVEN)

# State text that marks a finished proof in traced tactics.
PROVED_MARKER = "<proved>"


@dataclass(frozen=True)
class Premise:
    """One named declaration inside a premise file."""

    full_name: str
    file_path: str
    statement: str
    start: Pos
    end: Pos
    kind: str

    @property
    def key(self) -> str:
        return premise_key(self.file_path, self.full_name)

    @property
    def text(self) -> str:
        """Serialization used for embedding and retrieval."""
        return f"{self.full_name} : {self.statement}"


def premise_key(file_path: str, full_name: str) -> str:
    return f"{file_path}::{full_name}"


@dataclass(frozen=True)
class PremiseFile:
    path: str
    imports: tuple[str, ...]
    premises: tuple[Premise, ...]


@dataclass(frozen=True)
class TracedTactic:
    """A proof step with its retrieval annotations.

    annotated_tactic is the tactic text with premise references marked; the
    names in referenced_premises appear verbatim inside it.
    """

    tactic: str
    annotated_tactic: str
    referenced_premises: tuple[str, ...]
    state_before: str
    state_after: str


@dataclass(frozen=True)
class Theorem:
    url: str
    commit: str
    file_path: str
    full_name: str
    statement: str
    start: Pos
    end: Pos
    traced_tactics: tuple[TracedTactic, ...] = ()
    status: str = STATUS_PROVEN
    proof: tuple[str, ...] | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        """Identity: same path, name and statement means the same theorem."""
        return (self.file_path, self.full_name, self.statement)

    @property
    def key_str(self) -> str:
        return f"{self.file_path}::{self.full_name}"

    def with_status(self, status: str, proof: tuple[str, ...] | None = None) -> Theorem:
        return replace(self, status=status, proof=proof)


@dataclass
class Corpus:
    """Premise files in topological import order with lookup tables."""

    files: tuple[PremiseFile, ...]
    _by_path: dict[str, PremiseFile] = field(init=False, repr=False)
    _by_key: dict[str, Premise] = field(init=False, repr=False)
    _by_name: dict[str, Premise] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._by_path = {f.path: f for f in self.files}
        self._by_key = {}
        self._by_name = {}
        for f in self.files:
            for p in f.premises:
                self._by_key[p.key] = p
                # first definition in topological order wins name lookup
                self._by_name.setdefault(p.full_name, p)

    @property
    def paths(self) -> list[str]:
        return [f.path for f in self.files]

    @property
    def premise_count(self) -> int:
        return sum(len(f.premises) for f in self.files)

    def file(self, path: str) -> PremiseFile | None:
        return self._by_path.get(path)

    def premise(self, key: str) -> Premise | None:
        return self._by_key.get(key)

    def premise_by_name(self, full_name: str) -> Premise | None:
        return self._by_name.get(full_name)

    def all_premises(self) -> list[Premise]:
        return [p for f in self.files for p in f.premises]


@dataclass
class DatasetSplit:
    train: list[Theorem]
    val: list[Theorem]
    test: list[Theorem]

    def __iter__(self):
        return iter((self.train, self.val, self.test))


# -- parsing ----------------------------------------------------------------

def _require(cond: bool, line_no: int, reason: str) -> None:
    if not cond:
        raise MalformedLine(line_no, reason)


def _parse_pos(raw: object, line_no: int, label: str) -> Pos:
    _require(
        isinstance(raw, list) and len(raw) == 2
        and all(isinstance(v, int) for v in raw),
        line_no, f"{label} must be a [line, col] pair of ints",
    )
    line, col = raw  # type: ignore[misc]
    _require(line >= 1 and col >= 1, line_no, f"{label} must be 1-based")
    return (line, col)


def _parse_file(obj: object, line_no: int) -> PremiseFile:
    _require(isinstance(obj, dict), line_no, "expected a JSON object")
    assert isinstance(obj, dict)
    for field_name in ("path", "imports", "premises"):
        _require(field_name in obj, line_no, f"missing field {field_name!r}")
    path = obj["path"]
    _require(isinstance(path, str) and bool(path), line_no, "path must be a non-empty string")
    imports = obj["imports"]
    _require(
        isinstance(imports, list) and all(isinstance(i, str) for i in imports),
        line_no, "imports must be a list of strings",
    )
    _require(path not in imports, line_no, "file imports itself")
    raw_premises = obj["premises"]
    _require(isinstance(raw_premises, list), line_no, "premises must be a list")

    premises: list[Premise] = []
    seen_names: set[str] = set()
    for raw in raw_premises:
        _require(isinstance(raw, dict), line_no, "premise must be an object")
        for field_name in ("full_name", "code", "start", "end", "kind"):
            _require(field_name in raw, line_no, f"premise missing field {field_name!r}")
        name = raw["full_name"]
        _require(isinstance(name, str) and bool(name), line_no, "full_name must be a non-empty string")
        _require(name not in seen_names, line_no, f"duplicate premise name {name!r}")
        seen_names.add(name)
        code = raw["code"]
        _require(isinstance(code, str), line_no, "code must be a string")
        start = _parse_pos(raw["start"], line_no, "start")
        end = _parse_pos(raw["end"], line_no, "end")
        _require(start <= end, line_no, "premise start must not follow its end")
        kind = raw["kind"]
        _require(kind in PREMISE_KINDS, line_no, f"kind must be one of {PREMISE_KINDS}")
        premises.append(Premise(
            full_name=name, file_path=path, statement=code,
            start=start, end=end, kind=kind,
        ))
    return PremiseFile(path=path, imports=tuple(imports), premises=tuple(premises))


def parse_corpus(text: str) -> Corpus:
    """Parse JSONL corpus text, validate imports, and order topologically."""
    files: list[PremiseFile] = []
    seen_paths: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLine(line_no, f"invalid JSON: {e.msg}") from e
        pf = _parse_file(obj, line_no)
        if pf.path in seen_paths:
            raise DuplicatePath(pf.path)
        seen_paths.add(pf.path)
        files.append(pf)
    return corpus_from_files(files)


def corpus_from_files(files: list[PremiseFile]) -> Corpus:
    """Validate import targets and build a topologically ordered corpus."""
    paths = {f.path for f in files}
    for f in files:
        for target in f.imports:
            if target not in paths:
                raise UnknownImport(f.path, target)
    order = topological_order(files)
    by_path = {f.path: f for f in files}
    return Corpus(files=tuple(by_path[p] for p in order))


def serialize_corpus(corpus: Corpus) -> str:
    """Inverse of parse_corpus. Files keep their (topological) order."""
    lines = []
    for f in corpus.files:
        lines.append(json.dumps({
            "path": f.path,
            "imports": list(f.imports),
            "premises": [
                {
                    "full_name": p.full_name,
                    "code": p.statement,
                    "start": list(p.start),
                    "end": list(p.end),
                    "kind": p.kind,
                }
                for p in f.premises
            ],
        }, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


def topological_order(files: list[PremiseFile]) -> list[str]:
    """Order file paths so imports precede importers.

    Stable: among files whose imports are all placed, the one earliest in the
    input comes first. Imports pointing outside the given set are ignored
    here; corpus construction validates them separately.
    """
    index = {f.path: i for i, f in enumerate(files)}
    indegree = {f.path: 0 for f in files}
    dependents: dict[str, list[str]] = {f.path: [] for f in files}
    for f in files:
        for target in f.imports:
            if target in indegree:
                indegree[f.path] += 1
                dependents[target].append(f.path)

    import heapq

    ready = [index[p] for p, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    by_index = {i: f.path for i, f in enumerate(files)}
    order: list[str] = []
    while ready:
        path = by_index[heapq.heappop(ready)]
        order.append(path)
        for dep in dependents[path]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, index[dep])
    if len(order) != len(files):
        leftover = [f.path for f in files if f.path not in set(order)]
        raise ImportCycle(leftover)
    return order


# -- splits -----------------------------------------------------------------

def random_split(
    theorems: list[Theorem],
    seed: int,
    val_frac: float = 0.02,
    test_frac: float = 0.02,
) -> DatasetSplit:
    """Seeded uniform split; val and test each get max(1, floor(n * frac))."""
    n = len(theorems)
    if n < 3:
        raise TooFewTheorems(f"need at least 3 theorems to split, got {n}")
    n_val = max(1, math.floor(n * val_frac))
    n_test = max(1, math.floor(n * test_frac))
    if n_val + n_test >= n:
        raise TooFewTheorems(
            f"split sizes val={n_val} test={n_test} leave no training data for n={n}"
        )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    val = [theorems[i] for i in perm[:n_val]]
    test = [theorems[i] for i in perm[n_val:n_val + n_test]]
    train = [theorems[i] for i in perm[n_val + n_test:]]
    return DatasetSplit(train=train, val=val, test=test)


# -- theorem (de)serialization ----------------------------------------------

def tactic_to_json(t: TracedTactic) -> dict:
    return {
        "tactic": t.tactic,
        "annotated_tactic": [t.annotated_tactic, list(t.referenced_premises)],
        "state_before": t.state_before,
        "state_after": t.state_after,
    }


def tactic_from_json(obj: object) -> TracedTactic:
    if not isinstance(obj, dict):
        raise InvalidRecord("traced tactic must be an object")
    try:
        annotated = obj["annotated_tactic"]
        if (
            not isinstance(annotated, list) or len(annotated) != 2
            or not isinstance(annotated[0], str)
            or not isinstance(annotated[1], list)
        ):
            raise InvalidRecord("annotated_tactic must be [text, [names...]]")
        names = tuple(annotated[1])
        if not all(isinstance(n, str) for n in names):
            raise InvalidRecord("referenced premise names must be strings")
        for name in names:
            if name not in annotated[0]:
                raise InvalidRecord(
                    f"referenced premise {name!r} does not appear in the annotated tactic"
                )
        return TracedTactic(
            tactic=str(obj["tactic"]),
            annotated_tactic=annotated[0],
            referenced_premises=names,
            state_before=str(obj["state_before"]),
            state_after=str(obj["state_after"]),
        )
    except KeyError as e:
        raise InvalidRecord(f"traced tactic missing field {e.args[0]!r}") from e


def theorem_to_json(thm: Theorem, include_status: bool = True) -> dict:
    obj = {
        "url": thm.url,
        "commit": thm.commit,
        "file_path": thm.file_path,
        "full_name": thm.full_name,
        "statement": thm.statement,
        "start": list(thm.start),
        "end": list(thm.end),
        "traced_tactics": [tactic_to_json(t) for t in thm.traced_tactics],
    }
    if include_status:
        obj["status"] = thm.status
    if thm.proof is not None:
        obj["proof"] = list(thm.proof)
    return obj


def theorem_from_json(obj: object, status: str | None = None) -> Theorem:
    if not isinstance(obj, dict):
        raise InvalidRecord("theorem must be an object")
    try:
        resolved = status or obj.get("status", STATUS_PROVEN)
        if resolved not in THEOREM_STATUSES:
            raise InvalidRecord(f"unknown status {resolved!r}")
        tactics = tuple(tactic_from_json(t) for t in obj["traced_tactics"])
        if resolved == STATUS_SORRY and tactics:
            raise InvalidRecord("an unproven theorem cannot carry traced tactics")
        start = (int(obj["start"][0]), int(obj["start"][1]))
        end = (int(obj["end"][0]), int(obj["end"][1]))
        if start > end:
            raise InvalidRecord("theorem start must not follow its end")
        proof = obj.get("proof")
        return Theorem(
            url=str(obj["url"]),
            commit=str(obj["commit"]),
            file_path=str(obj["file_path"]),
            full_name=str(obj["full_name"]),
            statement=str(obj["statement"]),
            start=start,
            end=end,
            traced_tactics=tactics,
            status=resolved,
            proof=tuple(proof) if proof is not None else None,
        )
    except KeyError as e:
        raise InvalidRecord(f"theorem missing field {e.args[0]!r}") from e


def dump_theorems(theorems: list[Theorem]) -> str:
    return json.dumps([theorem_to_json(t) for t in theorems], ensure_ascii=False, indent=2) + "\n"


def load_theorems(text: str) -> list[Theorem]:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidRecord(f"invalid theorem JSON: {e.msg}") from e
    if not isinstance(raw, list):
        raise InvalidRecord("theorem file must be a JSON array")
    return [theorem_from_json(obj) for obj in raw]

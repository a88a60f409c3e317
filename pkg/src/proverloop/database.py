"""Growable store of traced repositories and dataset generation.

The database keeps repositories in the order they were added (most recent
last), remembers which admitted-but-unproven theorems have since been proved,
and turns any subset of repositories into a train/val/test dataset, merging
with well-defined dedup rules:

* duplicate theorem identities resolve to the most recently added copy,
* duplicate premise files and traced files resolve to the first encountered.

Documents serialize to canonical JSON (sorted keys, two-space indent) so a
persist/load round trip is byte-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import (
    Corpus,
    DatasetSplit,
    PremiseFile,
    STATUS_SORRY,
    Theorem,
    corpus_from_files,
    dump_theorems,
    random_split,
    serialize_corpus,
    theorem_from_json,
    theorem_to_json,
)
from .curriculum import Difficulty, compute_difficulty
from .errors import (
    AlreadyProven,
    CorruptDocument,
    InvalidRecord,
    IoFailure,
    NotFound,
    ProverloopError,
    UnknownRepo,
)

SINGLE_REPO = "single_repo"
MERGE_ALL = "merge_all"
STRATEGIES = (SINGLE_REPO, MERGE_ALL)

# Placeholder when fixture metadata carries no date; keeps ingest reproducible.
EPOCH = "1970-01-01T00:00:00Z"

_STATUS_GROUPS = ("proven", "sorry_unproven", "sorry_proven")


def repo_id_of(url: str, commit: str) -> str:
    return f"{url}@{commit}"


@dataclass
class RepositoryRecord:
    url: str
    commit: str
    name: str
    date_added: str = EPOCH
    toolchain_version: str = ""
    theorems: list[Theorem] = field(default_factory=list)
    premise_files: list[PremiseFile] = field(default_factory=list)
    traced_file_paths: list[str] = field(default_factory=list)
    difficulty_cache: dict[tuple[str, str, str], Difficulty] = field(default_factory=dict)

    @property
    def repo_id(self) -> str:
        return repo_id_of(self.url, self.commit)

    def theorems_with_status(self, status: str) -> list[Theorem]:
        return [t for t in self.theorems if t.status == status]

    def sorries(self) -> list[Theorem]:
        """Unproven theorems in deterministic (file, name) order."""
        return sorted(self.theorems_with_status(STATUS_SORRY), key=lambda t: t.key)

    def refresh_difficulties(self) -> None:
        self.difficulty_cache = {t.key: compute_difficulty(t) for t in self.theorems}

    def validate(self) -> None:
        seen_keys: set[tuple[str, str, str]] = set()
        for t in self.theorems:
            if t.key in seen_keys:
                raise InvalidRecord(f"duplicate theorem {t.full_name!r} in {self.repo_id}")
            seen_keys.add(t.key)
            if t.status == STATUS_SORRY and t.traced_tactics:
                raise InvalidRecord(f"unproven theorem {t.full_name!r} carries traced tactics")
        seen_paths: set[str] = set()
        for pf in self.premise_files:
            if pf.path in seen_paths:
                raise InvalidRecord(f"duplicate premise file {pf.path!r} in {self.repo_id}")
            seen_paths.add(pf.path)
        # raises if imports dangle or cycle
        corpus_from_files(self.premise_files)


@dataclass
class DatasetMetadata:
    repo_ids: list[str]
    theorem_count: int
    premise_file_count: int
    traced_file_count: int
    split_sizes: dict[str, int]
    created: str

    def to_json(self) -> dict:
        return {
            "repo_ids": list(self.repo_ids),
            "counts": {
                "theorems": self.theorem_count,
                "premise_files": self.premise_file_count,
                "traced_files": self.traced_file_count,
            },
            "splits": dict(self.split_sizes),
            "created": self.created,
        }


@dataclass
class GeneratedDataset:
    split: DatasetSplit
    corpus: Corpus
    metadata: DatasetMetadata

    @property
    def theorems(self) -> list[Theorem]:
        return self.split.train + self.split.val + self.split.test


class DynamicDatabase:
    """Ordered collection of repository records."""

    def __init__(self, repositories: list[RepositoryRecord] | None = None) -> None:
        self.repositories: list[RepositoryRecord] = []
        for rec in repositories or []:
            self.add_repository(rec)

    # -- membership ---------------------------------------------------------

    def add_repository(self, record: RepositoryRecord) -> None:
        """Append a validated record; re-adding a repo id replaces and
        moves it to the most-recent slot."""
        record.validate()
        if not record.difficulty_cache:
            record.refresh_difficulties()
        self.repositories = [r for r in self.repositories if r.repo_id != record.repo_id]
        self.repositories.append(record)

    def get_repository(self, repo_id: str) -> RepositoryRecord:
        for rec in self.repositories:
            if rec.repo_id == repo_id:
                return rec
        raise UnknownRepo(repo_id)

    @property
    def repo_ids(self) -> list[str]:
        return [r.repo_id for r in self.repositories]

    # -- sorry bookkeeping ----------------------------------------------------

    def record_sorry_proof(
        self, key: tuple[str, str, str], proof: list[str]
    ) -> Theorem:
        """Mark the most recent copy of an unproven theorem as proved.

        Transitions are monotone: once proved (by trace or by search) a
        theorem never returns to the unproven pool.
        """
        found_proven = False
        for rec in reversed(self.repositories):
            for i, thm in enumerate(rec.theorems):
                if thm.key != key:
                    continue
                if thm.status == STATUS_SORRY:
                    updated = thm.with_status("sorry_proven", tuple(proof))
                    rec.theorems[i] = updated
                    rec.difficulty_cache[key] = compute_difficulty(updated)
                    return updated
                found_proven = True
        if found_proven:
            raise AlreadyProven(f"theorem {key[1]!r} already has a proof")
        raise NotFound(f"no theorem with key {key!r}")

    # -- dataset generation ---------------------------------------------------

    def generate_dataset(
        self,
        repo_ids: list[str],
        strategy: str = MERGE_ALL,
        seed: int = 0,
        val_frac: float = 0.02,
        test_frac: float = 0.02,
    ) -> GeneratedDataset:
        if strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
        if strategy == SINGLE_REPO and len(repo_ids) != 1:
            raise ValueError("single_repo strategy takes exactly one repository")
        if not repo_ids:
            raise ValueError("no repositories given")
        records = [self.get_repository(rid) for rid in repo_ids]

        recency = {rec.repo_id: i for i, rec in enumerate(self.repositories)}
        ordered_keys: list[tuple[str, str, str]] = []
        best: dict[tuple[str, str, str], tuple[int, Theorem]] = {}
        premise_files: list[PremiseFile] = []
        seen_paths: set[str] = set()
        traced_files: list[str] = []
        seen_traced: set[str] = set()
        for rec in records:
            rank = recency[rec.repo_id]
            for thm in rec.theorems:
                k = thm.key
                if k not in best:
                    ordered_keys.append(k)
                    best[k] = (rank, thm)
                elif rank > best[k][0]:
                    best[k] = (rank, thm)
            for pf in rec.premise_files:
                if pf.path not in seen_paths:
                    seen_paths.add(pf.path)
                    premise_files.append(pf)
            for path in rec.traced_file_paths:
                if path not in seen_traced:
                    seen_traced.add(path)
                    traced_files.append(path)

        theorems = [best[k][1] for k in ordered_keys]
        corpus = corpus_from_files(premise_files)
        split = random_split(theorems, seed=seed, val_frac=val_frac, test_frac=test_frac)
        metadata = DatasetMetadata(
            repo_ids=list(repo_ids),
            theorem_count=len(theorems),
            premise_file_count=len(premise_files),
            traced_file_count=len(traced_files),
            split_sizes={
                "train": len(split.train),
                "val": len(split.val),
                "test": len(split.test),
            },
            created=max(rec.date_added for rec in records),
        )
        return GeneratedDataset(split=split, corpus=corpus, metadata=metadata)

    # -- persistence ----------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "repositories": [
                {
                    "url": rec.url,
                    "commit": rec.commit,
                    "name": rec.name,
                    "date_added": rec.date_added,
                    "toolchain_version": rec.toolchain_version,
                    "theorems": {
                        group: [
                            theorem_to_json(t, include_status=False)
                            for t in rec.theorems_with_status(group)
                        ]
                        for group in _STATUS_GROUPS
                    },
                    "premise_files": [
                        {
                            "path": pf.path,
                            "imports": list(pf.imports),
                            "premises": [
                                {
                                    "full_name": p.full_name,
                                    "code": p.statement,
                                    "start": list(p.start),
                                    "end": list(p.end),
                                    "kind": p.kind,
                                }
                                for p in pf.premises
                            ],
                        }
                        for pf in rec.premise_files
                    ],
                    "traced_files": list(rec.traced_file_paths),
                    "difficulty_cache": [
                        {
                            "file_path": k[0],
                            "full_name": k[1],
                            "statement": k[2],
                            "difficulty": d.to_json(),
                        }
                        for k, d in sorted(rec.difficulty_cache.items())
                    ],
                }
                for rec in self.repositories
            ],
        }

    @classmethod
    def from_json(cls, doc: object) -> DynamicDatabase:
        from .corpus import _parse_file  # shared premise-file validation

        if not isinstance(doc, dict) or "repositories" not in doc:
            raise CorruptDocument("database document must have a repositories list")
        raw_repos = doc["repositories"]
        if not isinstance(raw_repos, list):
            raise CorruptDocument("repositories must be a list")
        db = cls()
        for raw in raw_repos:
            try:
                theorems: list[Theorem] = []
                for group in _STATUS_GROUPS:
                    for t in raw["theorems"].get(group, []):
                        theorems.append(theorem_from_json(t, status=group))
                premise_files = [
                    _parse_file(pf, line_no=0) for pf in raw["premise_files"]
                ]
                cache: dict[tuple[str, str, str], Difficulty] = {}
                for entry in raw.get("difficulty_cache", []):
                    k = (entry["file_path"], entry["full_name"], entry["statement"])
                    cache[k] = Difficulty.from_json(entry["difficulty"])
                rec = RepositoryRecord(
                    url=str(raw["url"]),
                    commit=str(raw["commit"]),
                    name=str(raw["name"]),
                    date_added=str(raw.get("date_added", EPOCH)),
                    toolchain_version=str(raw.get("toolchain_version", "")),
                    theorems=theorems,
                    premise_files=premise_files,
                    traced_file_paths=[str(p) for p in raw.get("traced_files", [])],
                    difficulty_cache=cache,
                )
                db.add_repository(rec)
            except (KeyError, TypeError, ValueError, ProverloopError) as e:
                raise CorruptDocument(f"bad repository record: {e}") from e
        return db

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def persist(self, path: str | Path) -> None:
        try:
            Path(path).write_text(self.dumps(), encoding="utf-8")
        except OSError as e:
            raise IoFailure(f"cannot write database to {path}: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> DynamicDatabase:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise IoFailure(f"cannot read database from {path}: {e}") from e
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise CorruptDocument(f"database is not valid JSON: {e.msg}") from e
        return cls.from_json(doc)


def write_dataset(dataset: GeneratedDataset, out_dir: str | Path) -> None:
    """Materialize a generated dataset as files."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "corpus.jsonl").write_text(serialize_corpus(dataset.corpus), encoding="utf-8")
        (out / "train.json").write_text(dump_theorems(dataset.split.train), encoding="utf-8")
        (out / "val.json").write_text(dump_theorems(dataset.split.val), encoding="utf-8")
        (out / "test.json").write_text(dump_theorems(dataset.split.test), encoding="utf-8")
        (out / "metadata.json").write_text(
            json.dumps(dataset.metadata.to_json(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
    except OSError as e:
        raise IoFailure(f"cannot write dataset to {out}: {e}") from e

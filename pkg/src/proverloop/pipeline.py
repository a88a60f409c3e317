"""End-to-end lifecycle: ingest repositories, order them into a curriculum,
train the retriever through it, attempt the open goals after each round, and
emit the scoreboard.

Every stage is deterministic for a fixed config. Search timing defaults to a
counting clock (one millisecond per reading) so reports are byte-stable
across reruns; flip wall_clock for real timing.
"""

from __future__ import annotations

import dataclasses
import json
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import corpus_from_files, load_theorems, parse_corpus
from .curriculum import (
    CategoryCounts,
    Thresholds,
    categorize_theorems,
    compute_thresholds,
    count_categories,
    order_repositories,
)
from .database import (
    MERGE_ALL,
    SINGLE_REPO,
    DynamicDatabase,
    GeneratedDataset,
    RepositoryRecord,
    write_dataset,
)
from .errors import CorruptDocument, IoFailure, PipelineError, ProverloopError
from .metrics import (
    MetricReport,
    PerformanceMatrix,
    composite_score,
    average_test_curve,
    compute_report,
    matrix_to_csv,
    normalize_metrics,
    validation_to_csv,
)
from .retriever import (
    Checkpoint,
    EmbeddingModel,
    RetrievalTask,
    TrainConfig,
    compute_fisher,
    extract_eval_pairs,
    mine_training_examples,
    precompute_embeddings,
    recall_at_k,
    train_one_epoch,
)
from .search import (
    SearchBudget,
    SearchResult,
    TableEnvironment,
    TableFixture,
    TableGenerator,
    TickClock,
    accessible_premises,
    best_first_search,
    build_dependency_graph,
    retrieve_premises,
)

STRATEGY_SPELLINGS = {
    "single": SINGLE_REPO,
    "single_repo": SINGLE_REPO,
    "merge-all": MERGE_ALL,
    "merge_all": MERGE_ALL,
}


@dataclass(frozen=True)
class RunConfig:
    fixture_dirs: tuple[Path, ...]
    out_dir: Path
    seed: int = 0
    strategy: str = SINGLE_REPO
    ewc_lambda: float = 0.0
    window: int = 5
    embedding_dim: int = 48
    feature_buckets: int = 2048
    init_scale: float = 0.1
    lr: float = 1e-3
    warmup_steps: int = 1000
    batch_size: int = 16
    clip_norm: float = 1.0
    eval_every: int | None = None
    val_frac: float = 0.02
    test_frac: float = 0.02
    retrieval_fraction: float = 0.25
    retrieval_max: int = 100
    candidates: int = 64
    time_budget_ms: float = 600_000.0
    max_expansions: int | None = None
    prove_after: bool = False
    wall_clock: bool = False


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def parse_strategy(raw: str) -> str:
    key = raw.strip().lower()
    if key not in STRATEGY_SPELLINGS:
        raise ValueError(f"strategy must be one of {sorted(STRATEGY_SPELLINGS)}, got {raw!r}")
    return STRATEGY_SPELLINGS[key]


def _opt_int(raw: str) -> int | None:
    value = int(raw)
    return value if value > 0 else None


def parse_config(path: str | Path) -> RunConfig:
    """Read a `key = value` config file; paths resolve against its directory.

    Lines starting with # and blank lines are ignored. fixtures takes a
    comma-separated list of repository fixture directories.
    """
    cfg_path = Path(path)
    try:
        text = cfg_path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read config {path}: {e}") from e
    base = cfg_path.parent
    raw: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CorruptDocument(f"config line {line_no}: expected key = value")
        key, _, value = stripped.partition("=")
        raw[key.strip()] = value.strip()

    if "fixtures" not in raw:
        raise CorruptDocument("config is missing the fixtures key")
    fixture_dirs = tuple(
        (base / p.strip()).resolve() for p in raw.pop("fixtures").split(",") if p.strip()
    )
    out_dir = (base / raw.pop("out", "out")).resolve()

    parsers = {
        "seed": int,
        "strategy": parse_strategy,
        "ewc_lambda": float,
        "window": int,
        "embedding_dim": int,
        "feature_buckets": int,
        "init_scale": float,
        "lr": float,
        "warmup_steps": int,
        "batch_size": int,
        "clip_norm": float,
        "eval_every": _opt_int,
        "val_frac": float,
        "test_frac": float,
        "retrieval_fraction": float,
        "retrieval_max": int,
        "candidates": int,
        "time_budget_ms": float,
        "max_expansions": _opt_int,
        "prove_after": _parse_bool,
        "wall_clock": _parse_bool,
    }
    kwargs: dict = {}
    for key, value in raw.items():
        if key not in parsers:
            raise CorruptDocument(f"unknown config key {key!r}")
        try:
            kwargs[key] = parsers[key](value)
        except ValueError as e:
            raise CorruptDocument(f"bad config value for {key!r}: {e}") from e
    return RunConfig(fixture_dirs=fixture_dirs, out_dir=out_dir, **kwargs)


def override_config(config: RunConfig, **overrides) -> RunConfig:
    provided = {k: v for k, v in overrides.items() if v is not None}
    if "strategy" in provided:
        provided["strategy"] = parse_strategy(provided["strategy"])
    if "out_dir" in provided:
        provided["out_dir"] = Path(provided["out_dir"]).resolve()
    return dataclasses.replace(config, **provided)


@contextmanager
def _stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except ProverloopError as e:
        raise PipelineError(name, e) from e


# -- fixture loading ---------------------------------------------------------

def load_repo_fixture(fixture_dir: str | Path) -> tuple[RepositoryRecord, TableFixture]:
    root = Path(fixture_dir)
    try:
        meta = json.loads((root / "repo.json").read_text(encoding="utf-8"))
        corpus_text = (root / "corpus.jsonl").read_text(encoding="utf-8")
        theorem_text = (root / "theorems.json").read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read fixture {root}: {e}") from e
    except json.JSONDecodeError as e:
        raise CorruptDocument(f"bad repo.json in {root}: {e.msg}") from e
    if not isinstance(meta, dict) or "url" not in meta or "commit" not in meta:
        raise CorruptDocument(f"repo.json in {root} needs url and commit")
    corpus = parse_corpus(corpus_text)
    theorems = load_theorems(theorem_text)
    record = RepositoryRecord(
        url=str(meta["url"]),
        commit=str(meta["commit"]),
        name=str(meta.get("name", root.name)),
        date_added=str(meta.get("date_added", "1970-01-01T00:00:00Z")),
        toolchain_version=str(meta.get("toolchain_version", "")),
        theorems=theorems,
        premise_files=list(corpus.files),
        traced_file_paths=corpus.paths,
    )
    environment = TableFixture.load(root / "environment.json")
    return record, environment


# -- report types ---------------------------------------------------------------

@dataclass
class ProofAttempt:
    theorem: str
    repo_id: str
    phase: str  # during | after
    result: SearchResult

    def to_json(self) -> dict:
        return {
            "theorem": self.theorem,
            "repo": self.repo_id,
            "phase": self.phase,
            "status": self.result.status,
            "proof": self.result.proof,
            "total_log_prob": self.result.total_log_prob,
            "expansions": self.result.expansions,
            "elapsed_ms": self.result.elapsed_ms,
            "env_failures": self.result.env_failures,
        }


@dataclass
class RunReport:
    config: RunConfig
    thresholds: Thresholds
    curriculum: list[tuple[str, CategoryCounts]]
    matrix_rows: list[list[float]]
    validation: list[float]
    metric_report: MetricReport
    normalized: dict[str, dict[str, float]]
    composite: float
    attempts: list[ProofAttempt] = field(default_factory=list)

    def curriculum_json(self) -> dict:
        return {
            "thresholds": {"p33": self.thresholds.p33, "p67": self.thresholds.p67},
            "repositories": [
                {"repo_id": rid, "counts": counts.to_json()}
                for rid, counts in self.curriculum
            ],
        }

    def metrics_json(self) -> dict:
        return {
            "window": self.config.window,
            "strategy": self.config.strategy,
            "seed": self.config.seed,
            "raw": self.metric_report.to_json(),
            "normalized": self.normalized["run"],
            "composite": self.composite,
            "average_test_curve": average_test_curve(self.matrix_rows),
            "validation": list(self.validation),
        }

    def proofs_json(self) -> dict:
        return {"attempts": [a.to_json() for a in self.attempts]}


def emit_reports(report: RunReport, out_dir: str | Path) -> list[Path]:
    """Write the matrix CSV, metrics JSON, proofs JSON, and curriculum JSON
    (plus the validation series CSV the metrics subcommand consumes)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in (
            ("matrix.csv", matrix_to_csv(report.matrix_rows)),
            ("validation.csv", validation_to_csv(report.validation)),
            ("metrics.json", json.dumps(report.metrics_json(), sort_keys=True, indent=2) + "\n"),
            ("proofs.json", json.dumps(report.proofs_json(), sort_keys=True, indent=2) + "\n"),
            ("curriculum.json", json.dumps(report.curriculum_json(), sort_keys=True, indent=2) + "\n"),
        ):
            target = out / name
            target.write_text(text, encoding="utf-8")
            written.append(target)
        return written
    except OSError as e:
        raise IoFailure(f"cannot write reports to {out}: {e}") from e


# -- the run ---------------------------------------------------------------------

def _build_task(
    name: str, dataset: GeneratedDataset, seed: int
) -> RetrievalTask:
    return RetrievalTask(
        name=name,
        corpus=dataset.corpus,
        train_examples=mine_training_examples(dataset.split.train, dataset.corpus, seed=seed),
        val_pairs=extract_eval_pairs(dataset.split.val, dataset.corpus),
        test_pairs=extract_eval_pairs(dataset.split.test, dataset.corpus),
    )


def _prove_repo(
    record: RepositoryRecord,
    env_fixture: TableFixture,
    checkpoint: Checkpoint,
    db: DynamicDatabase,
    config: RunConfig,
    phase: str,
    attempts: list[ProofAttempt],
) -> None:
    sorries = record.sorries()
    if not sorries:
        return
    corpus = corpus_from_files(record.premise_files)
    graph = build_dependency_graph(corpus)
    index = precompute_embeddings(checkpoint.model, corpus)
    env = TableEnvironment(env_fixture)
    generator = TableGenerator(env_fixture)
    budget = SearchBudget(
        time_ms=config.time_budget_ms,
        max_expansions=config.max_expansions,
        candidates=config.candidates,
    )
    for theorem in sorries:
        accessible = accessible_premises(graph, corpus, theorem)
        retrieval_fn = lambda state, _acc=accessible: retrieve_premises(
            checkpoint.model, index, state, _acc,
            fraction=config.retrieval_fraction, max_n=config.retrieval_max,
        )
        clock = None if config.wall_clock else TickClock()
        result = best_first_search(
            env, generator, theorem, retrieval_fn=retrieval_fn,
            budget=budget, clock=clock,
        )
        attempts.append(ProofAttempt(
            theorem=theorem.key_str, repo_id=record.repo_id, phase=phase, result=result,
        ))
        if result.status == "proved" and result.proof is not None:
            db.record_sorry_proof(theorem.key, result.proof)


def ingest_fixtures(config: RunConfig) -> tuple[DynamicDatabase, dict[str, TableFixture]]:
    """Load every fixture directory into a fresh database."""
    db = DynamicDatabase()
    environments: dict[str, TableFixture] = {}
    with _stage("ingest"):
        for fixture_dir in config.fixture_dirs:
            record, env_fixture = load_repo_fixture(fixture_dir)
            db.add_repository(record)
            environments[record.repo_id] = env_fixture
    return db, environments


def build_curriculum(
    db: DynamicDatabase,
) -> tuple[Thresholds, list[tuple[str, CategoryCounts]]]:
    """Pool finite difficulties into thresholds, then order the repositories."""
    with _stage("curriculum"):
        finite = [
            d.value
            for rec in db.repositories
            for d in rec.difficulty_cache.values()
            if d.kind == "finite" and d.value is not None
        ]
        thresholds = compute_thresholds(finite)
        per_repo = []
        for rec in db.repositories:
            items = [(thm, rec.difficulty_cache[thm.key]) for thm in rec.theorems]
            per_repo.append((rec.repo_id, count_categories(
                categorize_theorems(items, thresholds)
            )))
        return thresholds, order_repositories(per_repo)


def run_pipeline(config: RunConfig, *, prove: bool = True) -> RunReport:
    out = Path(config.out_dir)
    db, environments = ingest_fixtures(config)
    thresholds, ordered = build_curriculum(db)

    attempts: list[ProofAttempt] = []
    tasks: list[RetrievalTask] = []
    matrix_rows: list[list[float]] = []
    validation: list[float] = []
    checkpoint = Checkpoint(model=EmbeddingModel.random_init(
        dim=config.embedding_dim,
        n_features=config.feature_buckets,
        seed=config.seed,
        scale=config.init_scale,
    ))

    ordered_ids = [rid for rid, _ in ordered]
    for k, repo_id in enumerate(ordered_ids, start=1):
        record = db.get_repository(repo_id)
        with _stage(f"dataset:{record.name}"):
            ids = [repo_id] if config.strategy == SINGLE_REPO else ordered_ids[:k]
            dataset = db.generate_dataset(
                ids, strategy=config.strategy, seed=config.seed,
                val_frac=config.val_frac, test_frac=config.test_frac,
            )
            write_dataset(dataset, out / "datasets" / f"task_{k:02d}")
            task = _build_task(record.name, dataset, seed=config.seed + 100 + k)
            tasks.append(task)

        with _stage(f"train:{record.name}"):
            train_config = TrainConfig(
                lr=config.lr,
                warmup_steps=config.warmup_steps,
                batch_size=config.batch_size,
                clip_norm=config.clip_norm,
                eval_every=config.eval_every,
                seed=config.seed + 10_000 + k,
                ewc=checkpoint.ewc_term(config.ewc_lambda),
            )
            checkpoint = train_one_epoch(checkpoint, task, train_config)
            checkpoint.fisher = compute_fisher(
                checkpoint.model, task.train_examples, batch_size=config.batch_size
            )
            ckpt_dir = out / "checkpoints"
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            checkpoint.save(ckpt_dir / f"task_{k:02d}.json")

        with _stage(f"evaluate:{record.name}"):
            assert checkpoint.best_val_r10 is not None
            validation.append(100.0 * checkpoint.best_val_r10)
            row = []
            for earlier in tasks:
                index = precompute_embeddings(checkpoint.model, earlier.corpus)
                row.append(100.0 * recall_at_k(
                    checkpoint.model, index, earlier.test_pairs, k=10
                ))
            matrix_rows.append(row)

        if prove:
            with _stage(f"prove:{record.name}"):
                _prove_repo(record, environments[repo_id], checkpoint, db, config,
                            phase="during", attempts=attempts)

    if prove and config.prove_after:
        with _stage("prove-after"):
            for repo_id in ordered_ids:
                record = db.get_repository(repo_id)
                _prove_repo(record, environments[repo_id], checkpoint, db, config,
                            phase="after", attempts=attempts)

    with _stage("metrics"):
        matrix = PerformanceMatrix(rows=matrix_rows, validation=validation)
        metric_report = compute_report(matrix, window=config.window)
        normalized = normalize_metrics({"run": metric_report})
        composite = composite_score({"run": metric_report})["run"]

    with _stage("report"):
        report = RunReport(
            config=config,
            thresholds=thresholds,
            curriculum=ordered,
            matrix_rows=matrix_rows,
            validation=validation,
            metric_report=metric_report,
            normalized=normalized,
            composite=composite,
            attempts=attempts,
        )
        checkpoint.save(out / "checkpoints" / "final.json")
        db.persist(out / "database.json")
        emit_reports(report, out)
    return report


def prove_standalone(
    config: RunConfig, checkpoint_path: str | Path | None = None
) -> tuple[DynamicDatabase, list[ProofAttempt]]:
    """Attempt every open goal with a saved checkpoint, outside training.

    Defaults to the final checkpoint of a previous run in the output
    directory. Proofs land in the returned database; the caller persists.
    """
    out = Path(config.out_dir)
    path = Path(checkpoint_path) if checkpoint_path else out / "checkpoints" / "final.json"
    with _stage("checkpoint"):
        checkpoint = Checkpoint.load(path)
    db, environments = ingest_fixtures(config)
    _, ordered = build_curriculum(db)
    attempts: list[ProofAttempt] = []
    for repo_id, _counts in ordered:
        record = db.get_repository(repo_id)
        with _stage(f"prove:{record.name}"):
            _prove_repo(record, environments[repo_id], checkpoint, db, config,
                        phase="after", attempts=attempts)
    return db, attempts

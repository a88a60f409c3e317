"""Config parsing, fixture loading, and the end-to-end run."""

import json
from pathlib import Path

import pytest

from proverloop.corpus import STATUS_SORRY_PROVEN
from proverloop.database import MERGE_ALL, SINGLE_REPO, DynamicDatabase
from proverloop.errors import CorruptDocument, IoFailure, PipelineError
from proverloop.fixtures import write_bundled
from proverloop.pipeline import (
    ProofAttempt,
    RunConfig,
    RunReport,
    emit_reports,
    ingest_fixtures,
    load_repo_fixture,
    override_config,
    parse_config,
    parse_strategy,
    prove_standalone,
    run_pipeline,
)
from proverloop.search import TableEnvironment, replay_proof

REPORT_FILES = ("matrix.csv", "validation.csv", "metrics.json",
                "proofs.json", "curriculum.json")


class TestParseConfig:
    def write(self, tmp_path, text):
        path = tmp_path / "run.cfg"
        path.write_text(text, encoding="utf-8")
        return path

    def test_full_file(self, tmp_path):
        (tmp_path / "repos" / "a").mkdir(parents=True)
        cfg = parse_config(self.write(tmp_path, "\n".join([
            "# a comment",
            "",
            "fixtures = repos/a",
            "out = results",
            "seed = 9",
            "strategy = merge-all",
            "ewc_lambda = 0.25",
            "window = 3",
            "lr = 0.5",
            "eval_every = 0",
            "max_expansions = 200",
            "prove_after = yes",
        ])))
        assert cfg.fixture_dirs == ((tmp_path / "repos" / "a").resolve(),)
        assert cfg.out_dir == (tmp_path / "results").resolve()
        assert cfg.seed == 9
        assert cfg.strategy == MERGE_ALL
        assert cfg.ewc_lambda == 0.25
        assert cfg.window == 3
        assert cfg.lr == 0.5
        assert cfg.eval_every is None  # non-positive means default
        assert cfg.max_expansions == 200
        assert cfg.prove_after is True
        assert cfg.wall_clock is False

    def test_out_defaults_next_to_the_config(self, tmp_path):
        cfg = parse_config(self.write(tmp_path, "fixtures = a, b\n"))
        assert cfg.out_dir == (tmp_path / "out").resolve()
        assert [d.name for d in cfg.fixture_dirs] == ["a", "b"]

    def test_missing_fixtures_key(self, tmp_path):
        with pytest.raises(CorruptDocument):
            parse_config(self.write(tmp_path, "seed = 3\n"))

    def test_unknown_key(self, tmp_path):
        with pytest.raises(CorruptDocument):
            parse_config(self.write(tmp_path, "fixtures = a\nturbo = on\n"))

    def test_bad_value(self, tmp_path):
        with pytest.raises(CorruptDocument):
            parse_config(self.write(tmp_path, "fixtures = a\nseed = soon\n"))

    def test_line_without_assignment(self, tmp_path):
        with pytest.raises(CorruptDocument):
            parse_config(self.write(tmp_path, "fixtures = a\njust words\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            parse_config(tmp_path / "absent.cfg")

    def test_strategy_spellings(self):
        assert parse_strategy("single") == SINGLE_REPO
        assert parse_strategy("single_repo") == SINGLE_REPO
        assert parse_strategy("merge-all") == MERGE_ALL
        assert parse_strategy("MERGE_ALL") == MERGE_ALL
        with pytest.raises(ValueError):
            parse_strategy("everything")


class TestOverrideConfig:
    def base(self):
        return RunConfig(fixture_dirs=(Path("/x"),), out_dir=Path("/x/out"))

    def test_none_values_change_nothing(self):
        cfg = override_config(self.base(), seed=None, strategy=None, out_dir=None)
        assert cfg == self.base()

    def test_values_replace_fields(self):
        cfg = override_config(self.base(), seed=4, strategy="merge-all",
                              ewc_lambda=0.5, out_dir="elsewhere")
        assert cfg.seed == 4
        assert cfg.strategy == MERGE_ALL
        assert cfg.ewc_lambda == 0.5
        assert cfg.out_dir == Path("elsewhere").resolve()


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("bundle")
    write_bundled(root)
    return root


@pytest.fixture(scope="module")
def finished_run(bundle):
    config = parse_config(bundle / "run.cfg")
    report = run_pipeline(config)
    return config, report


class TestLoadRepoFixture:
    def test_loads_record_and_environment(self, bundle):
        record, env = load_repo_fixture(bundle / "repo_algebra")
        assert record.url.startswith("fixture://")
        assert record.repo_id == f"{record.url}@{record.commit}"
        assert record.theorems and record.premise_files
        assert env.initial  # the proof table knows some starting states

    def test_missing_directory(self, tmp_path):
        with pytest.raises(IoFailure):
            load_repo_fixture(tmp_path / "nowhere")

    def test_repo_json_must_name_url_and_commit(self, tmp_path, bundle):
        import shutil
        broken = tmp_path / "broken"
        shutil.copytree(bundle / "repo_algebra", broken)
        (broken / "repo.json").write_text('{"url": "fixture://x"}', encoding="utf-8")
        with pytest.raises(CorruptDocument):
            load_repo_fixture(broken)

    def test_repo_json_must_be_json(self, tmp_path, bundle):
        import shutil
        broken = tmp_path / "broken2"
        shutil.copytree(bundle / "repo_algebra", broken)
        (broken / "repo.json").write_text("{oops", encoding="utf-8")
        with pytest.raises(CorruptDocument):
            load_repo_fixture(broken)


class TestRunPipeline:
    def test_matrix_is_lower_triangular_over_the_curriculum(self, finished_run):
        _, report = finished_run
        t = len(report.curriculum)
        assert t == 3
        assert [len(row) for row in report.matrix_rows] == list(range(1, t + 1))
        assert len(report.validation) == t

    def test_six_metrics_and_the_neutral_composite(self, finished_run):
        _, report = finished_run
        raw = report.metric_report.to_json()
        assert set(raw) == {"wf5", "fm", "cfr", "ebwt", "wp5", "ip"}
        assert all(isinstance(v, float) for v in raw.values())
        # a single setup min-max normalizes to the midpoint everywhere
        assert report.composite == pytest.approx(0.5)
        assert set(report.normalized) == {"run"}

    def test_report_files_and_artifacts_exist(self, finished_run):
        config, report = finished_run
        out = config.out_dir
        for name in REPORT_FILES:
            assert (out / name).is_file(), name
        assert (out / "database.json").is_file()
        assert (out / "checkpoints" / "final.json").is_file()
        for k in (1, 2, 3):
            assert (out / "checkpoints" / f"task_{k:02d}.json").is_file()
            dataset_dir = out / "datasets" / f"task_{k:02d}"
            assert sorted(p.name for p in dataset_dir.iterdir()) == [
                "corpus.jsonl", "metadata.json", "test.json", "train.json", "val.json",
            ]

    def test_metrics_json_contents(self, finished_run):
        config, report = finished_run
        doc = json.loads((config.out_dir / "metrics.json").read_text(encoding="utf-8"))
        assert doc["window"] == 5
        assert doc["strategy"] == SINGLE_REPO
        assert doc["seed"] == config.seed
        assert doc["composite"] == pytest.approx(0.5)
        assert len(doc["average_test_curve"]) == 3
        assert doc["validation"] == report.validation
        assert set(doc["normalized"]) == {"wf5", "fm", "cfr", "ebwt", "wp5", "ip"}

    def test_training_proves_open_goals_and_records_them(self, finished_run):
        config, report = finished_run
        proved = [a for a in report.attempts
                  if a.phase == "during" and a.result.status == "proved"]
        assert proved, "the bundled fixture is tuned so training unlocks proofs"
        db = DynamicDatabase.load(config.out_dir / "database.json")
        _, environments = ingest_fixtures(config)
        for attempt in proved:
            record = db.get_repository(attempt.repo_id)
            thm = next(t for t in record.theorems if t.key_str == attempt.theorem)
            assert thm.status == STATUS_SORRY_PROVEN
            assert list(thm.proof) == attempt.result.proof
            env = TableEnvironment(environments[attempt.repo_id])
            assert replay_proof(env, thm, list(thm.proof))

    def test_the_gated_goal_needs_the_trained_retriever(self, finished_run):
        _, report = finished_run
        gated = [a for a in report.attempts
                 if a.theorem.endswith("num.gated_goal") and a.phase == "during"]
        assert gated and gated[0].result.status == "proved"

    def test_unprovable_goal_is_reported_not_hidden(self, finished_run):
        _, report = finished_run
        hopeless = [a for a in report.attempts if a.theorem.endswith("num.never_goal")]
        assert hopeless
        assert all(a.result.status in ("exhausted", "timeout") for a in hopeless)

    def test_rerun_is_byte_identical(self, bundle, finished_run, tmp_path):
        config, _ = finished_run
        again = override_config(config, out_dir=tmp_path / "out2")
        run_pipeline(again)
        for name in REPORT_FILES + ("database.json",):
            first = (config.out_dir / name).read_bytes()
            second = (again.out_dir / name).read_bytes()
            assert first == second, name
        assert (config.out_dir / "checkpoints" / "final.json").read_bytes() == \
            (again.out_dir / "checkpoints" / "final.json").read_bytes()

    def test_stage_failures_carry_the_stage_name(self, bundle, tmp_path):
        import shutil
        broken_root = tmp_path / "fixtures"
        for name in ("repo_algebra", "repo_number", "repo_topology"):
            shutil.copytree(bundle / name, broken_root / name)
        (broken_root / "repo_number" / "environment.json").unlink()
        config = RunConfig(
            fixture_dirs=tuple(sorted(broken_root.iterdir())),
            out_dir=tmp_path / "out",
        )
        with pytest.raises(PipelineError) as err:
            run_pipeline(config)
        assert "ingest" in str(err.value)

    def test_emit_reports_failure_is_an_io_error(self, finished_run, tmp_path):
        _, report = finished_run
        blocker = tmp_path / "occupied"
        blocker.write_text("a file where a directory must go", encoding="utf-8")
        with pytest.raises(IoFailure):
            emit_reports(report, blocker)

    def test_empty_attempts_serialize_as_an_empty_list(self, finished_run, tmp_path):
        _, report = finished_run
        bare = RunReport(
            config=report.config, thresholds=report.thresholds,
            curriculum=report.curriculum, matrix_rows=report.matrix_rows,
            validation=report.validation, metric_report=report.metric_report,
            normalized=report.normalized, composite=report.composite,
        )
        emit_reports(bare, tmp_path / "bare")
        doc = json.loads((tmp_path / "bare" / "proofs.json").read_text(encoding="utf-8"))
        assert doc == {"attempts": []}


class TestTrainThenProve:
    def test_standalone_proving_uses_the_saved_checkpoint(self, bundle, tmp_path):
        config = override_config(parse_config(bundle / "run.cfg"),
                                 out_dir=tmp_path / "split_run")
        trained = run_pipeline(config, prove=False)
        assert trained.attempts == []
        doc = json.loads((config.out_dir / "proofs.json").read_text(encoding="utf-8"))
        assert doc == {"attempts": []}

        db, attempts = prove_standalone(config)
        assert attempts and all(a.phase == "after" for a in attempts)
        proved = [a for a in attempts if a.result.status == "proved"]
        assert proved
        for attempt in proved:
            record = db.get_repository(attempt.repo_id)
            thm = next(t for t in record.theorems if t.key_str == attempt.theorem)
            assert thm.status == STATUS_SORRY_PROVEN

    def test_missing_checkpoint_is_a_stage_failure(self, bundle, tmp_path):
        config = override_config(parse_config(bundle / "run.cfg"),
                                 out_dir=tmp_path / "never_ran")
        with pytest.raises(PipelineError) as err:
            prove_standalone(config)
        assert "checkpoint" in str(err.value)


class TestMergeAllStrategy:
    def test_merge_all_trains_on_growing_pools(self, bundle, tmp_path):
        config = override_config(parse_config(bundle / "run.cfg"),
                                 strategy="merge-all", out_dir=tmp_path / "merged")
        report = run_pipeline(config, prove=False)
        assert len(report.matrix_rows) == 3
        meta = json.loads(
            (config.out_dir / "datasets" / "task_03" / "metadata.json")
            .read_text(encoding="utf-8")
        )
        assert len(meta["repo_ids"]) == 3

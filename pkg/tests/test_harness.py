"""Experiment grids: config schema, result rows, reruns, aggregation, CLI."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import pytest

from ticketlab.errors import ConfigError, FormatError
from ticketlab.harness.cli import main
from ticketlab.harness.config import (
    CSV_COLUMNS,
    RECIPES,
    ExperimentConfig,
    load_config,
    output_root,
)
from ticketlab.harness.recipes import ResultRow, module_grid, run
from ticketlab.harness.report import report, summarize


class TestModuleGrid:
    def test_sixteen_subsets_empty_first(self, net_classify):
        grid = module_grid(net_classify, ("base", "top", "neck", "out"))
        assert len(grid) == 16
        assert grid[0].groups == ()
        assert grid[0].param_fraction == 0.0
        assert grid[-1].groups == ("base", "top", "neck", "out")
        seen = {cell.groups for cell in grid}
        assert len(seen) == 16

    def test_fractions_additive(self, net_classify):
        grid = module_grid(net_classify, ("base", "top", "neck", "out"))
        single = {cell.groups[0]: cell.param_fraction
                  for cell in grid if len(cell.groups) == 1}
        for cell in grid:
            assert cell.param_fraction == pytest.approx(
                sum(single[g] for g in cell.groups), rel=1e-12)
        assert grid[-1].param_fraction == pytest.approx(1.0, abs=1e-12)

    def test_group_count_limits(self, net_classify):
        with pytest.raises(ConfigError):
            module_grid(net_classify, ())
        with pytest.raises(ConfigError):
            module_grid(net_classify, tuple("abcdefg"))
        with pytest.raises(ConfigError):
            module_grid(net_classify, ("base", "ghost"))


class TestConfig:
    def test_minimal_defaults(self):
        cfg = load_config({"recipe": "sparsity_sweep"})
        assert cfg.size == "small"
        assert cfg.task == "classify"
        assert cfg.replicates == 5
        assert cfg.workers == 1
        assert cfg.p_grid == ()

    def test_from_file(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"recipe": "rounds_sweep", "replicates": 2}))
        cfg = load_config(path)
        assert cfg.recipe == "rounds_sweep"
        assert cfg.replicates == 2

    def test_schema_rejections(self):
        with pytest.raises(ConfigError):
            load_config({"recipe": "banana_sweep"})
        with pytest.raises(ConfigError):
            load_config({"recipe": "sparsity_sweep", "mystery_knob": 3})
        with pytest.raises(ConfigError):
            load_config({"recipe": "sparsity_sweep", "replicates": 0})
        with pytest.raises(ConfigError):
            load_config({"recipe": "sparsity_sweep", "p_grid": [1.0]})
        with pytest.raises(ConfigError):
            load_config({"recipe": "sparsity_sweep", "p_grid": []})

    def test_dataclass_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(recipe="nope")
        with pytest.raises(ConfigError):
            ExperimentConfig(recipe="sparsity_sweep", task="juggling")
        with pytest.raises(ConfigError):
            ExperimentConfig(recipe="sparsity_sweep", p_grid=(0.5, 1.2))

    def test_seed_derivation(self):
        cfg = ExperimentConfig(recipe="sparsity_sweep", base_seed=5, replicates=3)
        assert cfg.seeds() == (5, 6, 7)

    def test_json_round_trip(self):
        cfg = ExperimentConfig(recipe="early_bird", replicates=2,
                               p_grid=(0.8,), iterations=50)
        assert load_config(json.loads(cfg.to_json())) == cfg

    def test_recipe_registry_is_complete(self):
        from ticketlab.harness.recipes import _RECIPE_BODIES

        assert set(_RECIPE_BODIES) == set(RECIPES)


class TestOutputRoot:
    def test_explicit_beats_env(self, monkeypatch):
        monkeypatch.setenv("TICKETLAB_OUT", "/tmp/from-env")
        assert output_root("/tmp/explicit") == Path("/tmp/explicit")

    def test_env_beats_default(self, monkeypatch):
        monkeypatch.setenv("TICKETLAB_OUT", "/tmp/from-env")
        assert output_root(None) == Path("/tmp/from-env")

    def test_default(self, monkeypatch):
        monkeypatch.delenv("TICKETLAB_OUT", raising=False)
        assert output_root(None) == Path("ticketlab_out")


class TestResultRow:
    def test_as_csv_formats(self):
        row = ResultRow(recipe="sparsity_sweep", cell_id="p0.5", seed=3,
                        task="classify", metric_name="accuracy",
                        metric_value=0.1, p_target=None, wall_time_s=1.25)
        doc = row.as_csv()
        assert tuple(doc) == CSV_COLUMNS
        assert doc["metric_value"] == "0.1"
        assert doc["p_target"] == ""
        assert doc["seed"] == "3"
        assert doc["wall_time_s"] == "1.25"
        assert doc["error"] == ""

    def test_float_repr_round_trips(self):
        third = 1.0 / 3.0
        row = ResultRow(recipe="r", cell_id="c", seed=0, task="t",
                        metric_value=third)
        assert float(row.as_csv()["metric_value"]) == third


def tiny_run_config(recipe, out_dir, **overrides) -> ExperimentConfig:
    base = dict(recipe=recipe, replicates=1, iterations=20,
                out_dir=str(out_dir), p_grid=(0.5,))
    base.update(overrides)
    return load_config({k: list(v) if isinstance(v, tuple) else v
                        for k, v in base.items()})


def read_rows(csv_path) -> list[dict]:
    with open(csv_path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRun:
    def test_outputs_and_rerun_identity(self, tmp_path):
        out_a = run(tiny_run_config("sparsity_sweep", tmp_path / "a"))
        out_b = run(tiny_run_config("sparsity_sweep", tmp_path / "b"))
        assert out_a.csv_path.exists()
        assert out_a.svg_path.exists()
        assert (out_a.out_dir / "config.json").exists()
        rows_a, rows_b = read_rows(out_a.csv_path), read_rows(out_b.csv_path)
        assert len(rows_a) == len(rows_b) == 2  # dense + p=0.5
        for ra, rb in zip(rows_a, rows_b):
            for col in CSV_COLUMNS:
                if col == "wall_time_s":
                    continue
                assert ra[col] == rb[col], col

    def test_rows_sorted_and_replicated(self, tmp_path):
        out = run(tiny_run_config("sparsity_sweep", tmp_path, replicates=2,
                                  base_seed=7))
        keys = [(r.cell_id, r.seed) for r in out.rows]
        assert keys == sorted(keys)
        seeds = {r.seed for r in out.rows}
        assert seeds == {7, 8}
        per_cell = {}
        for r in out.rows:
            per_cell.setdefault(r.cell_id, []).append(r.seed)
        assert all(sorted(v) == [7, 8] for v in per_cell.values())

    def test_error_rows_do_not_abort(self, tmp_path):
        # trunk-matched sparsity 0.95 needs a per-group rate above 1
        cfg = tiny_run_config("transfer_compare", tmp_path, p_grid=(0.95,))
        out = run(cfg)
        assert len(out.rows) >= 1
        assert all(r.error for r in out.rows)
        assert "ConfigError" in out.rows[0].error
        assert out.csv_path.exists()

    def test_config_echo_matches(self, tmp_path):
        cfg = tiny_run_config("sparsity_sweep", tmp_path)
        out = run(cfg)
        echoed = load_config(json.loads((out.out_dir / "config.json").read_text()))
        assert echoed == cfg


class TestSummarize:
    @staticmethod
    def fake_row(cell="c", value="", error="", recipe="r"):
        return {"recipe": recipe, "cell_id": cell, "task": "classify",
                "metric_name": "accuracy", "metric_value": value,
                "error": error}

    def test_mean_and_sample_std(self):
        rows = [self.fake_row(value="68.0"), self.fake_row(value="70.0")]
        (s,) = summarize(rows)
        assert s.n == 2
        assert s.mean == pytest.approx(69.0)
        assert s.std == pytest.approx(math.sqrt(2.0))
        assert not s.single_replicate

    def test_single_replicate_flagged(self):
        (s,) = summarize([self.fake_row(value="0.5")])
        assert s.n == 1
        assert s.std == 0.0
        assert s.single_replicate

    def test_error_rows_excluded_but_counted(self):
        rows = [self.fake_row(value="1.0"),
                self.fake_row(value="", error="TrainingError: diverged"),
                self.fake_row(value="3.0")]
        (s,) = summarize(rows)
        assert s.n == 2
        assert s.mean == pytest.approx(2.0)
        assert s.errors == 1

    def test_nan_values_dropped(self):
        rows = [self.fake_row(value="nan"), self.fake_row(value="4.0")]
        (s,) = summarize(rows)
        assert s.n == 1
        assert s.mean == pytest.approx(4.0)

    def test_cells_sorted(self):
        rows = [self.fake_row(cell="z", value="1"),
                self.fake_row(cell="a", value="2")]
        out = summarize(rows)
        assert [s.cell_id for s in out] == ["a", "z"]


class TestReport:
    def test_single_recipe_dir(self, tmp_path):
        out = run(tiny_run_config("sparsity_sweep", tmp_path))
        summary = report(out.out_dir)
        assert summary.exists()
        md = (out.out_dir / "summary.md").read_text()
        assert "sparsity_sweep" in md
        assert "| recipe |" in md

    def test_root_with_multiple_recipes(self, tmp_path):
        run(tiny_run_config("sparsity_sweep", tmp_path))
        run(tiny_run_config("rounds_sweep", tmp_path, rounds_grid=(1, 2)))
        summary = report(tmp_path)
        text = summary.read_text()
        assert "sparsity_sweep" in text
        assert "rounds_sweep" in text

    def test_empty_dir_rejected(self, tmp_path):
        with pytest.raises(FormatError):
            report(tmp_path)

    def test_foreign_csv_rejected(self, tmp_path):
        bad = tmp_path / "results.csv"
        bad.write_text("who,what\n1,2\n")
        with pytest.raises(FormatError):
            report(tmp_path)


class TestCli:
    def test_train_and_save(self, tmp_path, capsys):
        ckpt = tmp_path / "weights.ckpt"
        rc = main(["train", "--iterations", "20", "--seed", "1",
                   "--save", str(ckpt)])
        assert rc == 0
        assert ckpt.exists()
        assert ckpt.with_name(ckpt.name + ".json").exists()
        out = capsys.readouterr().out
        assert "val accuracy" in out

    def test_prune_save_then_transfer(self, tmp_path, capsys):
        ticket = tmp_path / "ticket.ckpt"
        rc = main(["prune", "--iterations", "20", "--p", "0.5",
                   "--save", str(ticket)])
        assert rc == 0
        assert ticket.exists()
        assert "ticket sparsity" in capsys.readouterr().out
        rc = main(["transfer", "--iterations", "20", "--task", "keypoint",
                   "--source-task", "classify", "--ticket", str(ticket)])
        assert rc == 0
        assert "transferred classify ticket" in capsys.readouterr().out

    def test_prune_retrain_reports_metric(self, capsys):
        rc = main(["prune", "--iterations", "20", "--p", "0.5", "--retrain"])
        assert rc == 0
        assert "val accuracy" in capsys.readouterr().out

    def test_earlybird_prints_probes(self, capsys):
        rc = main(["earlybird", "--iterations", "20", "--probe-interval", "5"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "stop iteration" in out
        assert "probe @" in out

    def test_run_and_report(self, tmp_path, capsys):
        rc = main(["run", "sparsity_sweep", "--replicates", "1",
                   "--iterations", "20", "--p-grid", "0.5",
                   "--out", str(tmp_path)])
        assert rc == 0
        recipe_dir = tmp_path / "sparsity_sweep"
        assert (recipe_dir / "results.csv").exists()
        assert (recipe_dir / "sparsity_sweep.svg").exists()
        rc = main(["report", str(recipe_dir)])
        assert rc == 0
        assert "| recipe |" in capsys.readouterr().out

    def test_run_propagates_errors_in_exit_code(self, tmp_path, capsys):
        rc = main(["run", "transfer_compare", "--replicates", "1",
                   "--iterations", "20", "--p-grid", "0.95",
                   "--out", str(tmp_path)])
        assert rc == 1

    def test_report_on_empty_dir_fails(self, tmp_path, capsys):
        rc = main(["report", str(tmp_path)])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_out_env_var(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("TICKETLAB_OUT", str(tmp_path / "via-env"))
        rc = main(["run", "sparsity_sweep", "--replicates", "1",
                   "--iterations", "20", "--p-grid", "0.5"])
        assert rc == 0
        assert (tmp_path / "via-env" / "sparsity_sweep" / "results.csv").exists()

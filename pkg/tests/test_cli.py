"""Command line behavior: flows, output files, exit codes."""

import csv
import json

import pytest

from lmslab import load_problem
from lmslab.cli import build_parser, main


def _gen_problem(tmp_path, d=5):
    path = tmp_path / "p.json"
    assert main(["generate", "fig1", "--d", str(d), "--out", str(path)]) == 0
    return path


class TestParsing:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "lmslab" in capsys.readouterr().out

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_choice_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["bounds", "--theorem", "th99", "--gamma", "1", "--n", "5"])
        assert exc.value.code == 2

    def test_parser_builds_help_for_every_subcommand(self):
        parser = build_parser()
        text = parser.format_help()
        for name in ("generate", "run", "bounds", "exact", "rates", "compare", "fig1"):
            assert name in text


class TestBounds:
    def test_frozen_reference_output(self, capsys):
        code = main(["bounds", "--theorem", "cor1", "--gamma", "1.0", "--n", "9",
                     "--tau", "0"])
        assert code == 0
        out = capsys.readouterr().out
        assert "total 0.36" in out
        assert "bias_opt" in out

    def test_json_output_is_machine_readable(self, capsys):
        code = main(["bounds", "--theorem", "lemma1", "--gamma", "1.0", "--n", "10",
                     "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["bound_id"] == "lemma1"
        assert payload["total"] == pytest.approx(0.11)
        assert payload["params"]["n"] == 10

    def test_exponent_grid_flags(self, capsys):
        code = main(["bounds", "--theorem", "th3", "--gamma", "0.5", "--lam", "0.1",
                     "--n", "50", "--r", "0.0", "0.5", "1.0", "--b", "0.5", "1.0",
                     "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["params"]["r"] in (0.0, 0.5, 1.0)

    def test_inadmissible_step_size_exits_1(self, capsys):
        code = main(["bounds", "--theorem", "lemma1", "--gamma", "2.0", "--n", "10"])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestGenerate:
    def test_writes_loadable_problem(self, tmp_path, capsys):
        path = _gen_problem(tmp_path)
        out = capsys.readouterr().out
        assert "problem_id=" in out
        p = load_problem(path)
        assert p.d == 5

    def test_source_family_reports_condition_numbers(self, tmp_path, capsys):
        code = main(["generate", "source", "--d", "20", "--b", "0.5", "--r", "0.25",
                     "--out", str(tmp_path / "s.json")])
        assert code == 0
        assert "norm_r=" in capsys.readouterr().out

    def test_source_family_needs_exponents(self, capsys):
        code = main(["generate", "source", "--d", "20",
                     "--out", "/tmp/unused-lmslab.json"])
        assert code == 1
        assert "needs --b and --r" in capsys.readouterr().err

    def test_default_name_lands_in_out_dir(self, tmp_path):
        code = main(["generate", "fig1", "--d", "3", "--out-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "fig1-d3.json").exists()


class TestRunFlow:
    def test_run_appends_csv(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["run", "--problem", str(problem), "--algorithm", "AvGD",
                     "--gamma", "0.1", "--n", "50", "--oracle", "multiplicative",
                     "--reps", "2", "--checkpoints", "1", "50",
                     "--out-dir", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "final risk mean=" in out
        with (tmp_path / "runs.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 2 * 2

    def test_regime_prescription_fills_parameters(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["run", "--problem", str(problem), "--algorithm", "AvGD",
                     "--regime", "th1", "--n", "40", "--oracle", "multiplicative",
                     "--out-dir", str(tmp_path)])
        assert code == 0
        assert "lam=" in capsys.readouterr().out

    def test_missing_gamma_without_regime_exits_1(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["run", "--problem", str(problem), "--n", "10",
                     "--out-dir", str(tmp_path)])
        assert code == 1
        assert "--gamma is required" in capsys.readouterr().err

    def test_missing_problem_file_exits_1(self, tmp_path, capsys):
        code = main(["run", "--problem", str(tmp_path / "nope.json"),
                     "--gamma", "0.1", "--n", "10", "--out-dir", str(tmp_path)])
        assert code == 1

    def test_inadmissible_config_exits_1(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["run", "--problem", str(problem), "--gamma", "5.0", "--n", "10",
                     "--oracle", "multiplicative", "--out-dir", str(tmp_path)])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestExactFlow:
    def test_prints_decomposed_rows(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["exact", "--problem", str(problem), "--gamma", "0.2",
                     "--n", "100", "--checkpoints", "1", "10", "100"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("iter exact_risk bias_reg bias_opt variance")
        assert len(out.strip().splitlines()) == 4

    def test_json_and_csv_outputs(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["exact", "--problem", str(problem), "--variant", "acc_moment",
                     "--gamma", "0.2", "--delta", "0.9", "--lam", "0.05",
                     "--n", "50", "--checkpoints", "1", "50", "--json",
                     "--out-dir", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        payload = json.loads(out.splitlines()[0])
        assert payload["variant"] == "acc_moment"
        assert (tmp_path / "exact.csv").exists()

    def test_env_var_output_directory(self, tmp_path, capsys, monkeypatch):
        problem = _gen_problem(tmp_path)
        monkeypatch.setenv("LMSLAB_OUT", str(tmp_path / "envout"))
        code = main(["exact", "--problem", str(problem), "--gamma", "0.2",
                     "--n", "20", "--checkpoints", "20"])
        assert code == 0
        assert (tmp_path / "envout" / "exact.csv").exists()

    def test_under_damped_momentum_exits_1(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["exact", "--problem", str(problem), "--variant", "acc_spectral",
                     "--gamma", "0.5", "--delta", "0.1", "--n", "50"])
        assert code == 1
        assert "real distinct" in capsys.readouterr().err


class TestCompareFlow:
    def test_consistent_run_passes_check(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["compare", "--problem", str(problem), "--algorithm", "AvGD",
                     "--gamma", "0.2", "--n", "100", "--reps", "50",
                     "--checkpoints", "1", "10", "100", "--check",
                     "--out-dir", str(tmp_path)])
        assert code == 0
        assert "ok=True" in capsys.readouterr().out

    def test_verbose_prints_checkpoints(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["compare", "--problem", str(problem), "--algorithm", "AvGD",
                     "--gamma", "0.2", "--n", "20", "--reps", "10",
                     "--checkpoints", "1", "20", "--verbose",
                     "--out-dir", str(tmp_path)])
        assert code == 0
        assert "iter mc_mean exact stderr z" in capsys.readouterr().out

    def test_sampled_oracle_rejected(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["compare", "--problem", str(problem), "--gamma", "0.1",
                     "--n", "20", "--oracle", "multiplicative",
                     "--out-dir", str(tmp_path)])
        assert code == 1
        assert "additive_gaussian" in capsys.readouterr().err

    def test_last_iterate_tag_rejected(self, tmp_path, capsys):
        problem = _gen_problem(tmp_path)
        code = main(["compare", "--problem", str(problem), "--algorithm", "GD",
                     "--gamma", "0.2", "--n", "20", "--out-dir", str(tmp_path)])
        assert code == 1
        assert "averaged tags" in capsys.readouterr().err


class TestRatesFlow:
    def test_table_and_csv(self, tmp_path, capsys):
        code = main(["rates", "--b", "0.5", "--r", "0.0", "--d", "32",
                     "--horizons", "64", "128", "256", "512", "1024",
                     "--reps", "2", "--out-dir", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("r b algorithm regime d fitted predicted valid r2")
        with (tmp_path / "rates.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 3  # header + AvAccGD row + AvGD row

    def test_check_flags_slope_misses(self, tmp_path, capsys):
        """An implausibly tight tolerance on a tiny problem must trip exit 3."""
        code = main(["rates", "--b", "0.5", "--r", "0.0", "--d", "4",
                     "--horizons", "16", "32", "64", "128", "256",
                     "--reps", "2", "--check", "--tol", "0.001",
                     "--out-dir", str(tmp_path)])
        assert code == 3
        assert "check failed" in capsys.readouterr().err


class TestFig1Flow:
    def test_bias_panel_writes_plot_files(self, tmp_path, capsys):
        code = main(["fig1", "bias", "--d", "4", "--n", "200", "--reps", "2",
                     "--out-dir", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "slope" in out
        assert (tmp_path / "fig1_bias_summary.csv").exists()
        for label in ("AvGD", "AccGD", "AvAccGD"):
            assert (tmp_path / f"fig1_bias_{label}.csv").exists()

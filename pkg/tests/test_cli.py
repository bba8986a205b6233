"""Command-line interface: exit codes, config handling, output determinism."""

import json
import math

import pytest

import qplab.cli as cli
from qplab.errors import InvariantFailureError

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

MODEL = {
    "kernel": {"family": "laplacian_l1", "rho": 3.0},
    "potential": {"terms": [{"k": [1], "cos": 1.0, "sin": 0.0}]},
    "blocks": [1],
    "lambda": 220.0,
    "omega": [GOLDEN],
}


def write_config(tmp_path, obj, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def run(args):
    return cli.main(args)


class TestUsageAndConfigErrors:
    def test_missing_subcommand_is_usage_error(self):
        assert run([]) == 2

    def test_unknown_subcommand_is_usage_error(self):
        assert run(["no-such-command", "--config", "x.json"]) == 2

    def test_missing_config_file(self, tmp_path, capsys):
        code = run(["goodness-scan", "--config", str(tmp_path / "nope.json")])
        assert code == 2
        assert "cannot read config" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert run(["goodness-scan", "--config", str(p)]) == 2

    def test_config_without_model(self, tmp_path, capsys):
        path = write_config(tmp_path, {"goodness_scan": {}})
        assert run(["goodness-scan", "--config", path]) == 2
        assert "model" in capsys.readouterr().err

    def test_unusable_model_rejected(self, tmp_path, capsys):
        bad = dict(MODEL, **{"lambda": 0.5})
        path = write_config(tmp_path, {"model": bad,
                                       "goodness_scan": {"scales": [4],
                                                         "rho_bar": 2.4}})
        assert run(["goodness-scan", "--config", path]) == 2
        assert "lambda" in capsys.readouterr().err

    def test_missing_section_keys_named(self, tmp_path, capsys):
        path = write_config(tmp_path, {"model": MODEL, "goodness_scan": {}})
        assert run(["goodness-scan", "--config", path]) == 2
        err = capsys.readouterr().err
        assert "scales" in err and "rho_bar" in err

    def test_missing_phase_named(self, tmp_path, capsys):
        path = write_config(tmp_path, {
            "model": MODEL,
            "hit_count": {"energy": 0.5, "delta": 0.1, "n1": 4,
                          "scales": [8]},
        })
        assert run(["hit-count", "--config", path]) == 2
        assert "phase" in capsys.readouterr().err


class TestGoodnessScan:
    def config(self, tmp_path):
        return write_config(tmp_path, {
            "model": MODEL,
            "goodness_scan": {"scales": [4, 6], "rho_bar": 2.4,
                              "x_count": 3, "e_count": 2},
        })

    def test_writes_csv_and_exits_zero(self, tmp_path):
        path = self.config(tmp_path)
        out = tmp_path / "scan.csv"
        assert run(["goodness-scan", "--config", path, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("scale,x_index,e_index,energy,good")
        assert len(lines) == 1 + 2 * 3 * 2

    def test_byte_identical_across_threads(self, tmp_path):
        path = self.config(tmp_path)
        outs = []
        for threads in ("1", "3"):
            out = tmp_path / ("scan-%s.csv" % threads)
            code = run(["goodness-scan", "--config", path, "--seed", "5",
                        "--threads", threads, "--out", str(out)])
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_byte_identical_across_runs(self, tmp_path):
        path = self.config(tmp_path)
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        run(["goodness-scan", "--config", path, "--seed", "7", "--out", str(a)])
        run(["goodness-scan", "--config", path, "--seed", "7", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_stdout_when_no_out(self, tmp_path, capsys):
        path = self.config(tmp_path)
        assert run(["goodness-scan", "--config", path]) == 0
        got = capsys.readouterr().out
        assert got.startswith("scale,")


class TestLdtScan:
    def test_exit_zero_and_fractions(self, tmp_path):
        path = write_config(tmp_path, {
            "model": MODEL,
            "ldt_scan": {"scales": [4], "rho_bar": 2.4, "x_count": 4,
                         "e_count": 2},
        })
        out = tmp_path / "ldt.csv"
        assert run(["ldt-scan", "--config", path, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].split(",")[:3] == ["scale", "e_index", "energy"]
        assert len(lines) == 1 + 2


class TestNeumannCheck:
    def test_certified_run_exits_zero(self, tmp_path, capsys):
        path = write_config(tmp_path, {
            "model": MODEL,
            "neumann_check": {"scale": 5, "energy": 0.5, "delta": 0.1,
                              "count": 8, "series_terms": 5},
        })
        out = tmp_path / "n.csv"
        assert run(["neumann-check", "--config", path, "--seed", "5",
                    "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert rows[0].split(",")[0] == "sample"

    def test_no_usable_sample_is_hypothesis_failure(self, tmp_path, capsys):
        # delta above the potential range puts every phase in the sublevel set
        path = write_config(tmp_path, {
            "model": MODEL,
            "neumann_check": {"scale": 5, "energy": 0.0, "delta": 5.0,
                              "count": 4},
        })
        assert run(["neumann-check", "--config", path]) == 2
        assert "no sample" in capsys.readouterr().err

    def test_low_coupling_is_hypothesis_failure(self, tmp_path, capsys):
        weak = dict(MODEL, **{"lambda": 50.0})
        path = write_config(tmp_path, {
            "model": weak,
            "neumann_check": {"scale": 5, "energy": 0.5, "delta": 0.1,
                              "count": 4},
        })
        assert run(["neumann-check", "--config", path]) == 2

    def test_reported_violation_exits_three(self, tmp_path, monkeypatch,
                                             capsys):
        # exit-code plumbing: a driver-reported violation maps to 3
        path = write_config(tmp_path, {
            "model": MODEL,
            "neumann_check": {"scale": 5, "energy": 0.5, "delta": 0.1,
                              "count": 1},
        })
        header = ["sample", "hypotheses_ok", "norm_ok", "decay_ok", "norm",
                  "norm_budget", "worst_margin_log", "series_ok"]
        rows = [(0, True, False, True, 25.0, 20.0, 0.1, True)]
        monkeypatch.setattr(cli.exp, "run_neumann_check",
                            lambda *a, **k: (header, rows, [0]))
        assert run(["neumann-check", "--config", path]) == 3
        assert "certified bound violated" in capsys.readouterr().err


class TestCartanSweep:
    def test_exit_zero_and_rows(self, tmp_path):
        path = write_config(tmp_path, {
            "model": MODEL,
            "phase": [0.123],
            "cartan_sweep": {"scale": 3, "energy": 0.5,
                             "epsilons": [1e-1, 1e-2], "samples": 128},
        })
        out = tmp_path / "c.csv"
        assert run(["cartan-sweep", "--config", path, "--seed", "7",
                    "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].split(",")[0] == "epsilon"
        assert len(lines) == 3


class TestMsaToy:
    def config(self, tmp_path, **overrides):
        sec = {
            "phases": [[0.123], [0.377]],
            "energies": [1.4],
            "delta": 0.35,
            "n1": 4, "n_bar": 32, "big_n": 24, "rho_bar": 2.4,
            "degrade_constant": 1.0, "inner_diam_cap": 16.0,
        }
        sec.update(overrides)
        model = dict(MODEL, **{"lambda": 300.0})
        return write_config(tmp_path, {"model": model, "msa_toy": sec})

    def test_known_good_run_exits_zero(self, tmp_path, capsys):
        path = self.config(tmp_path)
        out = tmp_path / "msa.csv"
        assert run(["msa-toy", "--config", path, "--seed", "3",
                    "--out", str(out)]) == 0
        summary = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert summary["geometry_violations"] == 0
        assert summary["bad_fraction"] <= summary["measure_target"]
        assert summary["glued_norm_log_max"] <= summary["norm_budget_log"]
        lines = out.read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].endswith("final_good,effective_rate")

    def test_geometry_violation_exits_three(self, tmp_path, monkeypatch):
        path = self.config(tmp_path)

        class Fake:
            bad_fraction = 0.0
            measure_target = 1.0
            glued_norm_log_max = 0.0
            norm_budget_log = 1.0
            geometry_violations = ["planted"]
            ok = False

            class ledger:
                stages = []

        monkeypatch.setattr(cli.exp, "run_msa_toy",
                            lambda *a, **k: (["x"], [], Fake()))
        assert run(["msa-toy", "--config", path]) == 3

    def test_budget_breach_exits_three(self, tmp_path, monkeypatch):
        path = self.config(tmp_path)

        class Fake:
            bad_fraction = 0.0
            measure_target = 1.0
            glued_norm_log_max = 9.0
            norm_budget_log = 1.0
            geometry_violations = []
            ok = False

            class ledger:
                stages = []

        monkeypatch.setattr(cli.exp, "run_msa_toy",
                            lambda *a, **k: (["x"], [], Fake()))
        assert run(["msa-toy", "--config", path]) == 3

    def test_invariant_error_exits_three(self, tmp_path, monkeypatch, capsys):
        path = self.config(tmp_path)

        def boom(*a, **k):
            raise InvariantFailureError("glued norm exceeds certified budget")

        monkeypatch.setattr(cli.exp, "run_msa_toy", boom)
        assert run(["msa-toy", "--config", path]) == 3
        assert "certified bound violated" in capsys.readouterr().err


class TestScheduleTable:
    def test_defaults_exit_zero_with_meta(self, tmp_path, capsys):
        path = write_config(tmp_path, {"schedule_table": {"steps": 3}})
        out = tmp_path / "s.csv"
        assert run(["schedule-table", "--config", path, "--out",
                    str(out)]) == 0
        meta = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert meta["c1"] == 0.01
        assert meta["rho_target"] == 0.5
        lines = out.read_text().splitlines()
        assert len(lines) == 4

    def test_log_start_certifies(self, tmp_path, capsys):
        path = write_config(tmp_path, {
            "schedule_table": {"steps": 3, "n_start_log": 1300.0},
        })
        assert run(["schedule-table", "--config", path,
                    "--out", str(tmp_path / "s.csv")]) == 0
        meta = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert meta["rho_verdict"] is True


class TestHitCount:
    def test_exit_zero_and_fraction(self, tmp_path, capsys):
        model = dict(MODEL, **{"lambda": 300.0})
        path = write_config(tmp_path, {
            "model": model,
            "phase": [0.123],
            "hit_count": {"energy": 1.4, "delta": 0.35, "n1": 4,
                          "scales": [8, 16, 24]},
        })
        out = tmp_path / "h.csv"
        assert run(["hit-count", "--config", path, "--out", str(out)]) == 0
        blob = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert blob["zero_fraction"] == 1.0
        lines = out.read_text().splitlines()
        assert len(lines) == 4


class TestLocalizationProfile:
    def test_exit_zero_rows_and_summary(self, tmp_path, capsys):
        model = dict(MODEL, **{"lambda": 50.0})
        path = write_config(tmp_path, {
            "model": model,
            "phase": [0.123],
            "localization_profile": {"scale": 15},
        })
        out = tmp_path / "loc.csv"
        assert run(["localization-profile", "--config", path,
                    "--out", str(out)]) == 0
        summary = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert summary["states"] == 31
        assert summary["residual_ok"] is True
        lines = out.read_text().splitlines()
        assert lines[0] == "state,energy,center,rate,participation_ratio"
        assert len(lines) == 32

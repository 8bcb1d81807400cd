import json
from pathlib import Path

import pytest

from measureflow.cli import main

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def write_config(tmp_path, name="config.json", **kw):
    path = tmp_path / name
    path.write_text(json.dumps(kw))
    return str(path)


def run(tmp_path, command, out_name="out", **config):
    cfg = write_config(tmp_path, **config)
    out = tmp_path / out_name
    code = main([command, "--config", cfg, "--out", str(out), "--no-plots"])
    return code, out


def read_report(out):
    return json.loads((out / "report.json").read_text())


class TestSchemaErrors:
    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["verify-ito", "--config", str(tmp_path / "nope.json")])
        assert code == 2
        assert "config" in capsys.readouterr().err

    def test_missing_scenario_field(self, tmp_path, capsys):
        code, _ = run(tmp_path, "verify-ito", N=10, steps=10, seed=1)
        assert code == 2
        assert "config.scenario" in capsys.readouterr().err

    def test_missing_sigma_pinpointed(self, tmp_path, capsys):
        scenario = {
            "kind": "mv",
            "r": 0.05, "rho": 0.3, "beta": 2.0,
            "lam": 0.5, "gamma": 10.0, "T": 1.0,
            "initial": {"kind": "point", "params": [0.5]},
        }
        code, _ = run(tmp_path, "check-mv-value", scenario=scenario, N=10, steps=10, seed=1)
        assert code == 2
        assert "scenario.sigma" in capsys.readouterr().err

    def test_seed_is_mandatory(self, tmp_path, capsys):
        code, _ = run(
            tmp_path, "verify-ito",
            scenario=str(SCENARIOS / "trivial_drift.json"), N=10, steps=10,
        )
        assert code == 2
        assert "config.seed" in capsys.readouterr().err

    def test_invalid_json_scenario(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, _ = run(tmp_path, "verify-ito", scenario=str(bad), N=10, steps=10, seed=1)
        assert code == 2


class TestRuns:
    def test_trivial_drift_passes(self, tmp_path):
        code, out = run(
            tmp_path, "verify-ito",
            scenario=str(SCENARIOS / "trivial_drift.json"),
            N=32, steps=64, seed=7, lhs_expected=1.0,
        )
        assert code == 0
        rep = read_report(out)
        assert rep["passed"] is True
        assert abs(rep["results"]["general"]["residual"]) < 1e-12
        assert (out / "manifest.json").exists()
        assert (out / "summary.txt").exists()
        assert (out / "verify_ito_steps.csv").exists()

    def test_singular_common_deterministic(self, tmp_path):
        code, out = run(
            tmp_path, "verify-singular",
            scenario=str(SCENARIOS / "singular_common.json"),
            N=16, steps=16, seed=3,
        )
        assert code == 0
        rep = read_report(out)
        assert abs(rep["results"]["singular"]["residual"]) <= 1e-10

    def test_tolerance_failure_exit_one(self, tmp_path):
        # impossible expectation forces a tolerance failure, report still there
        code, out = run(
            tmp_path, "verify-ito",
            scenario=str(SCENARIOS / "trivial_drift.json"),
            N=16, steps=16, seed=1, lhs_expected=123.0,
        )
        assert code == 1
        rep = read_report(out)
        assert rep["passed"] is False

    def test_simulation_failure_exit_three(self, tmp_path):
        import numpy as np

        scenario = {
            "kind": "jump_diffusion",
            "drift": {"x": 1e200},  # overflows to inf within two Euler steps
            "diffusion": {},
            "initial": {"kind": "point", "params": [1.0]},
            "jump_rate": 0.0,
            "phi": {"kind": "moment", "power": 2},
        }
        with np.errstate(over="ignore", invalid="ignore"):
            code, out = run(tmp_path, "verify-ito", scenario=scenario, N=4, steps=10, seed=1)
        assert code == 3
        assert (out / "error.json").exists()

    def test_override_changes_n(self, tmp_path):
        cfg = write_config(
            tmp_path,
            scenario=str(SCENARIOS / "trivial_drift.json"),
            N=8, steps=16, seed=2,
        )
        out = tmp_path / "o"
        code = main([
            "verify-ito", "--config", cfg, "--out", str(out),
            "--override", "N=24", "--no-plots",
        ])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["N"] == 24
        rep = read_report(out)
        assert rep["results"]["general"]["n_particles"] == 24

    def test_solve_lq_decoupled(self, tmp_path):
        code, out = run(
            tmp_path, "solve-lq",
            scenario=str(SCENARIOS / "lq_decoupled.json"),
            steps=2000, seed=5,
        )
        assert code == 0
        rep = read_report(out)
        checks = {c["check"]: c for c in rep["checks"]}
        assert checks["closed_form_error"]["passed"]
        assert checks["hjb_residual"]["passed"]
        assert (out / "riccati.csv").exists()
        assert (out / "mean_path.csv").exists()

    def test_check_mv_value_free(self, tmp_path):
        code, out = run(
            tmp_path, "check-mv-value",
            scenario=str(SCENARIOS / "mv_free.json"),
            N=4000, steps=200, seed=7,
        )
        assert code == 0
        rep = read_report(out)
        assert rep["results"]["mv_value"]["eta_mass_mean"] == 0.0


class TestDeterminism:
    def test_rerun_is_byte_identical(self, tmp_path):
        kw = dict(
            scenario=str(SCENARIOS / "compound_poisson_mean.json"),
            N=500, steps=50, seed=11, mark_mc=2,
        )
        _, out1 = run(tmp_path, "verify-jump", out_name="a", **kw)
        _, out2 = run(tmp_path, "verify-jump", out_name="b", **kw)
        for name in ("report.json", "manifest.json", "verify_general_steps.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_threads_do_not_change_bytes(self, tmp_path):
        cfg = write_config(
            tmp_path,
            scenario=str(SCENARIOS / "brownian_x2.json"),
            N_list=[100, 200], steps_list=[20], seeds=[1, 2, 3],
        )
        outs = []
        for threads, name in [(1, "t1"), (8, "t8")]:
            out = tmp_path / name
            code = main([
                "convergence-sweep", "--config", cfg, "--out", str(out),
                "--threads", str(threads), "--no-plots",
            ])
            assert code == 0
            outs.append(out)
        assert (outs[0] / "sweep.csv").read_bytes() == (outs[1] / "sweep.csv").read_bytes()
        assert (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()


def test_plots_rendered_by_default(tmp_path):
    cfg = write_config(
        tmp_path,
        scenario=str(SCENARIOS / "trivial_drift.json"),
        N=16, steps=16, seed=2,
    )
    out = tmp_path / "withplots"
    code = main(["verify-ito", "--config", cfg, "--out", str(out)])
    assert code == 0
    assert (out / "verify_ito.png").exists()


def test_custom_phi_literal(tmp_path):
    # <x, mu> * <x^2, mu> through the polynomial literal format
    scenario = {
        "kind": "jump_diffusion",
        "drift": {"const": 1.0},
        "diffusion": {},
        "initial": {"kind": "point", "params": [1.0]},
        "jump_rate": 0.0,
        "phi": {
            "kind": "custom",
            "inner": [[[1.0, [1]]], [[1.0, [2]]]],
            "outer": [[1.0, [1, 1]]],
        },
    }
    code, out = run(tmp_path, "verify-ito", scenario=scenario, N=8, steps=400, seed=1)
    assert code == 0
    rep = read_report(out)
    # deterministic drift from 1: lhs = 2*4 - 1*1 = 7, first-order residual O(dt)
    assert rep["results"]["general"]["lhs"] == pytest.approx(7.0, abs=0.1)


def test_lq_numeric_moment_table(tmp_path):
    scenario = json.loads((SCENARIOS / "lq_decoupled.json").read_text())
    # replace explicit jump functions by the equivalent numeric table
    from measureflow.scenario import build_lq

    coeffs, _, _ = build_lq(scenario)
    table = coeffs.nu_moments()
    numeric = {k: v for k, v in scenario.items() if k not in ("jump", "mark_law")}
    numeric["jump_rate"] = 0.0
    numeric["nu_moments"] = {
        name: getattr(table, name) for name in table.__dataclass_fields__
    }
    code, out = run(tmp_path, "solve-lq", scenario=numeric, steps=2000, seed=4)
    assert code == 0
    rep = read_report(out)
    assert "hjb_residual" not in {c["check"] for c in rep["checks"]}
    assert rep["checks"]  # oracle checks still ran (decoupled)

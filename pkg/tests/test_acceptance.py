"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every criterion runs through the command-line front end with a pinned seed and
writes its reports into a session directory; the final criterion reruns every
earlier command with a different worker count and requires byte-identical
numeric outputs. Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from measureflow.cli import main

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
SEED = 2024

_RUNS = []  # (label, command, config_path) for the determinism rerun


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _run(workdir, label, command, config, expect_code=0):
    cfg_path = workdir / f"{label}_config.json"
    cfg_path.write_text(json.dumps(config, indent=1))
    out = workdir / label
    code = main([command, "--config", str(cfg_path), "--out", str(out), "--no-plots"])
    assert code == expect_code, f"{label}: exit {code}, expected {expect_code}"
    _RUNS.append((label, command, cfg_path))
    return json.loads((out / "report.json").read_text())


def _checks(report):
    return {c["check"]: c for c in report["checks"]}


def _report_line(num, desc, ok):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {desc}")
    assert ok


def test_criterion_1_continuous_ito(workdir):
    rep = _run(
        workdir,
        "c1_brownian",
        "verify-ito",
        {
            "scenario": str(SCENARIOS / "brownian_x2.json"),
            "N": 100_000,
            "steps": 1000,
            "seed": SEED,
            "lhs_expected": 1.0,
            "tolerances": {"se_mult": 3.0, "dt_mult": 5.0, "floor": 1e-10},
        },
    )
    checks = _checks(rep)
    ok = checks["general_residual"]["passed"] and checks["lhs_expected"]["passed"]
    _report_line(
        1,
        "continuous-case identity, N=1e5, dt=1e-3: |residual| <= 3 SE + 5 dt "
        f"(residual {rep['results']['general']['residual']:.2e}), lhs in 1 +- 3 SE",
        ok,
    )


def test_criterion_2_jump_ito(workdir):
    oks, details = [], []
    for tag, scen in (("mean", "compound_poisson_mean.json"), ("x2", "compound_poisson_x2.json")):
        rep = _run(
            workdir,
            f"c2_{tag}",
            "verify-jump",
            {
                "scenario": str(SCENARIOS / scen),
                "N": 100_000,
                "steps": 500,
                "seed": SEED,
                "mark_mc": 2,
                "tolerances": {"se_mult": 3.0, "dt_mult": 0.0, "floor": 1e-10},
            },
        )
        checks = _checks(rep)
        oks.append(
            checks["general_residual"]["passed"]
            and checks["corollary_residual"]["passed"]
            and checks["route_agreement"]["passed"]
        )
        details.append(
            f"{tag}: gen {rep['results']['general']['residual']:.1e}, "
            f"cor {rep['results']['corollary']['residual']:.1e}"
        )
    _report_line(
        2,
        "jump-case identity, both routes within 3 SE and mutually consistent ("
        + "; ".join(details) + ")",
        all(oks),
    )


def test_criterion_3_singular_ito(workdir):
    rep_c = _run(
        workdir,
        "c3_common",
        "verify-singular",
        {
            "scenario": str(SCENARIOS / "singular_common.json"),
            "N": 1000,
            "steps": 100,
            "seed": SEED,
        },
    )
    res_c = rep_c["results"]["singular"]
    ok_common = abs(res_c["residual"]) <= 1e-10 and res_c["terms"]["law_jump_term"] == pytest.approx(1.0, abs=1e-12)

    rep_i = _run(
        workdir,
        "c3_idio",
        "verify-singular",
        {
            "scenario": str(SCENARIOS / "singular_idio.json"),
            "N": 20_000,
            "steps": 500,
            "seed": SEED,
        },
    )
    res_i = rep_i["results"]["singular"]
    ok_idio = (
        _checks(rep_i)["singular_residual"]["passed"]
        and res_i["terms"]["law_jump_term"] == 0.0
    )
    _report_line(
        3,
        "singular identities: deterministic common jump residual "
        f"{res_c['residual']:.1e} <= 1e-10; idiosyncratic residual "
        f"{res_i['residual']:.1e} within 3 SE with law term exactly 0",
        ok_common and ok_idio,
    )


def test_criterion_4_convergence_sweep(workdir):
    rep = _run(
        workdir,
        "c4_sweep",
        "convergence-sweep",
        {
            "scenario": str(SCENARIOS / "brownian_x2.json"),
            "N_list": [1000, 10_000, 100_000],
            "steps_list": [100],
            "seeds": list(range(1, 11)),
            "slope_band": [-0.65, -0.35],
        },
    )
    slope = rep["results"]["sweep"]["slope_vs_n"]
    _report_line(
        4,
        f"Monte Carlo residual slope vs N = {slope:.3f} in [-0.65, -0.35]",
        _checks(rep)["residual_slope_vs_N"]["passed"],
    )


def test_criterion_5_riccati_oracle(workdir):
    rep = _run(
        workdir,
        "c5_riccati",
        "solve-lq",
        {
            "scenario": str(SCENARIOS / "lq_decoupled.json"),
            "steps": 10_000,
            "seed": SEED,
            "ratio_steps": 200,
            "tolerances": {"oracle": 1e-8},
        },
    )
    checks = _checks(rep)
    err = rep["results"]["closed_form_error"]
    ratio = rep["results"]["step_halving_ratio"]
    _report_line(
        5,
        f"decoupled backward system vs matrix-exponential oracle: max error {err:.2e} <= 1e-8, "
        f"refinement ratio {ratio:.1f} in [8, 32]",
        checks["closed_form_error"]["passed"] and checks["step_halving_ratio"]["passed"],
    )


def test_criterion_6_lq_optimality(workdir):
    rep = _run(
        workdir,
        "c6_optimality",
        "verify-lq-optimality",
        {
            "scenario": str(SCENARIOS / "lq_standard.json"),
            "N": 10_000,
            "steps": 250,
            "seed": SEED,
            "K": 20,
            "eps": 0.1,
            "solver_steps": 2000,
            "check_value": False,
            "ratio_band": [2.8, 5.2],
        },
    )
    checks = _checks(rep)
    ratio = rep["results"]["optimality"]["gap_ratio"]
    _report_line(
        6,
        "optimal feedback dominates K=20 detuned policies under common random "
        f"numbers; eps-doubling gap ratio {ratio:.2f} in [2.8, 5.2]",
        checks["gaps_dominated"]["passed"] and checks["eps_doubling_ratio"]["passed"],
    )


def test_criterion_7_lq_value_match(workdir):
    rep = _run(
        workdir,
        "c7_value",
        "verify-lq-optimality",
        {
            "scenario": str(SCENARIOS / "lq_standard.json"),
            "N": 100_000,
            "steps": 1000,
            "seed": SEED,
            "solver_steps": 2000,
            "check_gaps": False,
            "check_value": True,
            "tolerances": {"dt_mult": 10.0},
        },
    )
    vm = rep["results"]["value_match"]
    _report_line(
        7,
        f"closed-loop cost {vm['j_optimal']:.5f} matches the quadratic value "
        f"{vm['value_function']:.5f} within 3 SE + 10 dt (gap {vm['gap']:.2e})",
        _checks(rep)["value_match"]["passed"],
    )


def test_criterion_8_mv_closed_forms(workdir):
    import sympy as sp

    t, r, rho, sigma, beta, T = sp.symbols("t r rho sigma beta T", positive=True)
    kappa = rho**2 / sigma**2
    A = beta / 2 * sp.exp((2 * r - kappa) * (T - t))
    B = sp.Integer(0)
    C = -sp.exp(r * (T - t))
    D = (1 - sp.exp(kappa * (T - t))) / (2 * beta)
    ode_ok = (
        sp.simplify(sp.diff(A, t) - (kappa - 2 * r) * A) == 0
        and sp.simplify(sp.diff(B, t) - kappa * B**2 / A + 2 * r * B) == 0
        and sp.simplify(sp.diff(C, t) + r * C - kappa * B / A) == 0
        and sp.simplify(sp.diff(D, t) - kappa * C**2 / (4 * A)) == 0
        and sp.simplify(A.subs(t, T) - beta / 2) == 0
        and sp.simplify(C.subs(t, T) + 1) == 0
        and sp.simplify(D.subs(t, T)) == 0
    )

    rep = _run(
        workdir,
        "c8_adjoint",
        "simulate-mv",
        {
            "scenario": str(SCENARIOS / "mv_active.json"),
            "N": 5000,
            "steps": 500,
            "seed": SEED,
        },
    )
    checks = _checks(rep)
    adj = rep["results"]["adjoint"]
    _report_line(
        8,
        "closed forms satisfy their backward equations symbolically; adjoint "
        f"terminal residual {adj['terminal_residual']:.1e} <= 1e-10 and drift "
        "matches -r p within 3 SE along the path",
        ode_ok
        and checks["adjoint_terminal"]["passed"]
        and checks["adjoint_drift"]["passed"]
        and checks["boundary_violations"]["passed"],
    )


def test_criterion_9_mv_value(workdir):
    oks, details = [], []
    for tag, scen, n in (("free", "mv_free.json", 50_000), ("active", "mv_active.json", 50_000)):
        rep = _run(
            workdir,
            f"c9_{tag}",
            "check-mv-value",
            {
                "scenario": str(SCENARIOS / scen),
                "N": n,
                "steps": 1000,
                "seed": SEED,
                "tolerances": {"dt_mult": 10.0},
            },
        )
        checks = _checks(rep)
        res = rep["results"]["mv_value"]
        oks.append(
            checks["value_gap"]["passed"]
            and checks["boundary_violations"]["passed"]
            and checks["pushes_end_on_boundary"]["passed"]
        )
        details.append(f"{tag}: gap {res['gap']:.2e} <= {res['band']:.2e}, eta {res['eta_mass_mean']:.3f}")
    _report_line(
        9,
        "mean-variance value identity in both regimes with zero boundary "
        "violations (" + "; ".join(details) + ")",
        all(oks),
    )


def test_criterion_10_fokker_planck(workdir):
    oks, details = [], []
    for tag, scen in (("diffusion", "fp_diffusion.json"), ("jump", "fp_jump.json")):
        rep = _run(
            workdir,
            f"c10_{tag}",
            "fp-consistency",
            {
                "scenario": str(SCENARIOS / scen),
                "N": 20_000,
                "steps": 200,
                "seed": SEED,
                "mark_mc": 4,
                "tolerances": {"relative": 0.05},
            },
        )
        res = rep["results"]["fokker_planck"]
        oks.append(_checks(rep)["fp_relative_gap"]["passed"])
        details.append(
            f"{tag}: pde {res['phi_rate_pde']:.4f} vs mc {res['phi_rate_mc']:.4f} "
            f"(rel gap {res['relative_gap']:.3f})"
        )
    _report_line(
        10,
        "density-march functional rate within 5% of the particle generator on "
        "a 401-node grid (" + "; ".join(details) + ")",
        all(oks),
    )


def test_criterion_11_thread_determinism(workdir):
    assert _RUNS, "earlier criteria must run first"
    mismatches = []
    for label, command, cfg_path in _RUNS:
        out8 = workdir / f"{label}_t8"
        code = main(
            [
                command,
                "--config",
                str(cfg_path),
                "--out",
                str(out8),
                "--threads",
                "8",
                "--no-plots",
            ]
        )
        assert code == 0, f"{label} rerun failed with exit {code}"
        out1 = workdir / label
        for path in sorted(out1.glob("*")):
            if path.suffix not in (".json", ".csv"):
                continue
            twin = out8 / path.name
            if not twin.exists() or path.read_bytes() != twin.read_bytes():
                mismatches.append(f"{label}/{path.name}")
    _report_line(
        11,
        f"all {len(_RUNS)} runs byte-identical at 1 and 8 worker threads "
        "across every report file",
        not mismatches,
    )

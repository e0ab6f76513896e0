"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one ``criterion N: PASS|FAIL`` line, printed in the
terminal summary (and to stdout with ``-s``).  Run standalone with
``python3 tests/test_acceptance.py``.
"""

import json
import sys
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import ACCEPTANCE_LINES, bump, unit
from degenbeam import (
    BeamState,
    ControlProblem,
    assemble_beam_operator,
    build_grid,
    build_quadrature,
    classify,
    clamped_modes,
    estimate_CT,
    h2_seminorm_sq,
    identity_residual_first,
    identity_residual_second,
    make_power_profile,
    observability_time,
    solve_homogeneous,
    synthesize_control,
    verify_null_control,
    weighted_l2_norm_sq,
)
from degenbeam.cli import main as cli_main
from degenbeam.dynamics import TraceSeries, fit_time_step
from degenbeam.hum import duality_residual
from degenbeam.observability import random_modal_data


def record(n, title, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def sqrt_setup():
    p = make_power_profile(0.5)
    cls = classify(p)
    return p, cls, observability_time(cls)


def test_criterion_1_energy_conservation(sqrt_setup):
    p = sqrt_setup[0]
    g = build_grid(200)
    op, quad = assemble_beam_operator(p, g), build_quadrature(p, g)
    modes = clamped_modes(op, 8)
    Y, V = random_modal_data(modes, 5, np.random.default_rng(2024))
    worst, slowest = 0.0, 0.0
    for j in range(Y.shape[1]):
        t = time.perf_counter()
        traj = solve_homogeneous(BeamState.from_interior(Y[:, j], V[:, j]), 1.0, 1e-3, op, quad)
        slowest = max(slowest, time.perf_counter() - t)
        e = traj.energies
        worst = max(worst, float(np.max(np.abs(e - e[0])) / e[0]))
    ok = worst <= 1e-10 and slowest < 5.0
    record(1, "energy conservation", ok, f"max relative drift {worst:.2e} (<= 1e-10), {slowest:.2f} s per run")


def test_criterion_2_eigenvalue_oracle():
    t = time.perf_counter()
    op = assemble_beam_operator(unit, build_grid(400))
    lam = float(clamped_modes(op, 1).eigenvalues[0])
    elapsed = time.perf_counter() - t
    k1 = brentq(lambda k: np.cos(k) * np.cosh(k) - 1.0, 4.0, 5.0)
    err = abs(lam / 500.564 - 1)
    ok = err <= 1e-3 and abs(k1**4 - 500.564) < 1e-3 and elapsed < 10.0
    record(2, "operator eigenvalue", ok, f"lambda_1 = {lam:.4f} vs 500.564, rel err {err:.2e} (<= 1e-3), {elapsed:.2f} s")


def test_criterion_3_weighted_norms():
    g = build_grid(400)
    u = bump(g.nodes)
    wl2 = weighted_l2_norm_sq(u, build_quadrature(make_power_profile(1.0), g))
    h2 = h2_seminorm_sq(u, g)
    e1, e2 = abs(wl2 * 280 - 1), abs(h2 / 0.8 - 1)
    ok = e1 <= 1e-2 and e2 <= 5e-3
    record(3, "weighted norms", ok, f"L2_(1/x) rel err {e1:.2e} (<= 1e-2), H2 rel err {e2:.2e} (<= 5e-3)")


def test_criterion_4_identities(sqrt_setup):
    p = sqrt_setup[0]
    t = time.perf_counter()
    res = {"first": [], "second": []}
    for n, dt in [(100, 2e-3), (200, 1e-3), (400, 5e-4)]:
        g = build_grid(n)
        op, quad = assemble_beam_operator(p, g), build_quadrature(p, g)
        traj = solve_homogeneous(BeamState(bump(g.nodes), np.zeros(n + 1)), 1.0, dt, op, quad)
        res["first"].append(identity_residual_first(traj, p, quad, g).relative_residual)
        res["second"].append(identity_residual_second(traj, p, quad, g).relative_residual)
    elapsed = time.perf_counter() - t
    ok = elapsed < 60.0
    parts = []
    for name, r in res.items():
        ok &= r[-1] <= 0.05 and r[0] > r[1] > r[2]
        parts.append(f"{name} " + "/".join(f"{v:.2%}" for v in r))
    record(4, "multiplier identities", ok, ", ".join(parts) + f" (<= 5% at N=400, decreasing), {elapsed:.1f} s")


@pytest.fixture(scope="module")
def observability_runs(sqrt_setup):
    p, cls, T0 = sqrt_setup
    T = 2 * T0
    g = build_grid(200)
    op = assemble_beam_operator(p, g)
    dt = fit_time_step(T, 1e-3)
    t = time.perf_counter()
    rep = estimate_CT(p, cls, T, op, dt, mode_count=10, samples=100, seed=0)
    elapsed = time.perf_counter() - t
    rep2 = estimate_CT(p, cls, 2 * T, op, fit_time_step(2 * T, 1e-3), mode_count=10, samples=0)
    return rep, rep2, elapsed


def test_criterion_5_observability_bracket(observability_runs):
    rep, _, elapsed = observability_runs
    lo, hi = 0.9 * rep.lower_bound, 1.1 * rep.upper_bound
    q = rep.sample_quotients
    ok = (
        rep.lower_bound == pytest.approx(16.0)
        and rep.upper_bound == pytest.approx(272.0)
        and q.size == 100
        and bool(np.all((q >= lo) & (q <= hi)))
        and elapsed < 300.0
    )
    record(
        5,
        "observability bracket",
        ok,
        f"quotients in [{q.min():.2f}, {q.max():.2f}] within [{lo:.1f}, {hi:.1f}], {elapsed:.1f} s",
    )


def test_criterion_6_CT_estimate(observability_runs):
    rep, rep2, _ = observability_runs
    ok = rep.C_T_estimate >= 0.9 * rep.lower_bound and rep2.C_T_estimate >= rep.C_T_estimate
    record(
        6,
        "C_T estimate",
        ok,
        f"C_T(T) = {rep.C_T_estimate:.2f} >= {0.9 * rep.lower_bound:.1f}, C_T(2T) = {rep2.C_T_estimate:.2f}",
    )


def test_criterion_7_null_control(sqrt_setup):
    p, _, T0 = sqrt_setup
    T = 2 * T0
    g = build_grid(200)
    op = assemble_beam_operator(p, g)
    u0 = g.to_nodes(clamped_modes(op, 1).modes[0])
    t = time.perf_counter()
    prob = ControlProblem(u0, np.zeros_like(u0), T, p, g, fit_time_step(T, 1e-3), filter_modes=10)
    sol = synthesize_control(prob)
    idle = verify_null_control(prob, TraceSeries(np.zeros(prob.n_steps + 1), prob.dt, T))
    elapsed = time.perf_counter() - t
    c = sol.check
    ok = (
        sol.iterations <= 200
        and sol.cg_residual <= 1e-10
        and c.full_energy_reduction <= 1e-8
        and c.energy_reduction <= 1e-8
        and abs(idle.full_energy_reduction - 1) <= 1e-10
        and abs(idle.energy_reduction - 1) <= 1e-10
        and elapsed < 300.0
    )
    record(
        7,
        "null control",
        ok,
        f"{sol.iterations} CG its, residual {sol.cg_residual:.1e}; controlled E(T)/E(0) = {c.full_energy_reduction:.1e} "
        f"(filtered {c.energy_reduction:.1e}); uncontrolled ratio - 1 = {idle.full_energy_reduction - 1:.1e}, {elapsed:.1f} s",
    )


def test_criterion_8_duality():
    p = make_power_profile(0.5)
    g = build_grid(24)
    rng = np.random.default_rng(8)
    t = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        u0, u1 = (g.to_nodes(rng.standard_normal(g.n_unknowns)) for _ in range(2))
        prob = ControlProblem(u0, u1, 0.5, p, g, 0.01, filter_modes=3, allow_short_time=True)
        W = BeamState(*(g.to_nodes(rng.standard_normal(g.n_unknowns)) for _ in range(2)), t=0.5)
        f = TraceSeries(rng.standard_normal(prob.n_steps + 1), 0.01, 0.5)
        worst = max(worst, duality_residual(prob, f, W))
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-12 and elapsed < 10.0
    record(8, "transposition duality", ok, f"max relative defect {worst:.1e} over 20 triples (<= 1e-12), {elapsed:.2f} s")


def test_criterion_9_determinism(tmp_path):
    cfg = {
        "profile": {"type": "power", "alpha": 0.5, "scale": 1.0},
        "grid": {"n": 200},
        "time": {"T": "auto2T0", "dt": 0.001},
        "initial": {"y": "bump", "v": "zero"},
        "observability": {"samples": 100, "mode_count": 10},
    }
    path = tmp_path / "observe.json"
    path.write_text(json.dumps(cfg))
    codes = [cli_main(["observe", "--config", str(path), "--out", str(tmp_path / d), "--seed", "12345"]) for d in "ab"]
    same = all(
        (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        for name in ("quotients.csv", "observability.json")
    )
    ok = codes == [0, 0] and same
    record(9, "determinism", ok, f"exit codes {codes}, quotients.csv and observability.json byte-identical: {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))

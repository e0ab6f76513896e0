import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bump
from degenbeam import assemble_beam_operator, build_grid, build_quadrature, make_power_profile
from degenbeam.discretization import clamped_modes, trace_row
from degenbeam.dynamics import BeamState, energy, fit_time_step, solve_homogeneous, time_weights
from degenbeam.errors import TooManyModes, ZeroEnergyData
from degenbeam.observability import (
    Which,
    energy_basis,
    estimate_CT,
    identity_residual_first,
    identity_residual_second,
    modal_gramian,
    quotient,
    quotients,
    random_modal_data,
)
from degenbeam.profiles import classify, observability_time


def _bump_run(profile, n, T=0.5):
    g = build_grid(n)
    op, quad = assemble_beam_operator(profile, g), build_quadrature(profile, g)
    traj = solve_homogeneous(BeamState(bump(g.nodes), np.zeros(n + 1)), T, 0.2 / n, op, quad)
    return traj, quad, g


@pytest.mark.parametrize("alpha", [0.5, 1.3])
def test_identities_converge(alpha):
    profile = make_power_profile(alpha)
    res = {Which.First: [], Which.Second: []}
    for n in (50, 100, 200):
        traj, quad, g = _bump_run(profile, n)
        for fn in (identity_residual_first, identity_residual_second):
            rep = fn(traj, profile, quad, g)
            assert rep.lhs > 0
            res[rep.which].append(rep.relative_residual)
    for vals in res.values():
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 0.05
        # first order in h
        assert 1.6 < vals[1] / vals[2] < 2.4


def test_identity_terms_sum_to_rhs(sqrt_profile):
    traj, quad, g = _bump_run(sqrt_profile, 40)
    rep = identity_residual_first(traj, sqrt_profile, quad, g)
    assert sum(rep.terms) == pytest.approx(rep.rhs)
    assert rep.relative_residual == pytest.approx(abs(rep.lhs - rep.rhs) / max(abs(rep.lhs), abs(rep.rhs)))


def test_identities_on_zero_data(sqrt_profile):
    g = build_grid(20)
    op, quad = assemble_beam_operator(sqrt_profile, g), build_quadrature(sqrt_profile, g)
    traj = solve_homogeneous(BeamState.zero(g), 0.1, 0.01, op, quad)
    assert identity_residual_second(traj, sqrt_profile, quad, g).relative_residual == 0.0


def test_energy_basis_is_orthonormal(sqrt_profile):
    g = build_grid(60)
    op = assemble_beam_operator(sqrt_profile, g)
    Y, V = energy_basis(clamped_modes(op, 4))
    H = g.h * (Y.T @ op.apply_stiffness(Y) + V.T @ (op.inv_a[:, None] * V))
    np.testing.assert_allclose(H, np.eye(8), atol=1e-9)


def test_single_mode_gramian_closed_form(sqrt_profile):
    # one mode rotates by theta = 2 arctan(omega dt / 2) per step, so the traces of
    # the two basis data are c cos(k theta), c sin(k theta) with c = trace(phi) / omega
    g = build_grid(60)
    op = assemble_beam_operator(sqrt_profile, g)
    modes = clamped_modes(op, 1)
    T, dt = 0.3, 1e-3
    G = modal_gramian(op, modes, T, dt)
    omega = modes.frequencies[0]
    theta = 2 * np.arctan(omega * dt / 2)
    k = np.arange(G.traces.shape[0])
    c = trace_row(g) @ modes.modes[0] / omega
    F = c * np.column_stack([np.cos(k * theta), np.sin(k * theta)])
    exact = F.T @ (time_weights(len(k) - 1, dt)[:, None] * F)
    np.testing.assert_allclose(G.gram, exact, rtol=1e-9, atol=1e-9 * np.abs(exact).max())


def test_quotient_is_scale_invariant(sqrt_profile):
    g = build_grid(30)
    op, quad = assemble_beam_operator(sqrt_profile, g), build_quadrature(sqrt_profile, g)
    s = BeamState(bump(g.nodes), g.nodes**3 * (1 - g.nodes) ** 2)
    q1 = quotient(s, op, 0.2, 0.002, quad)
    q2 = quotient(BeamState(3 * s.y, 3 * s.v), op, 0.2, 0.002, quad)
    assert q1 == pytest.approx(q2, rel=1e-12)
    traj = solve_homogeneous(s, 0.2, 0.002, op, quad)
    assert q1 == pytest.approx(traj.trace.integral_sq() / energy(s, quad, g), rel=1e-10)


def test_quotient_rejects_zero_data(sqrt_profile):
    g = build_grid(20)
    op, quad = assemble_beam_operator(sqrt_profile, g), build_quadrature(sqrt_profile, g)
    with pytest.raises(ZeroEnergyData):
        quotient(BeamState.zero(g), op, 0.1, 0.01, quad)
    with pytest.raises(ZeroEnergyData):
        quotients(op, np.zeros((19, 2)), np.zeros((19, 2)), 0.1, 0.01)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.1, 1.9))
def test_sample_quotients_bracketed_by_gramian(seed, alpha):
    # Rayleigh quotients of the Gramian lie between its extreme eigenvalues
    profile = make_power_profile(alpha)
    g = build_grid(30)
    op = assemble_beam_operator(profile, g)
    modes = clamped_modes(op, 3)
    T, dt = 0.4, 2e-3
    ev = modal_gramian(op, modes, T, dt).energy_normalized_eigenvalues()
    y, v = random_modal_data(modes, 5, np.random.default_rng(seed))
    q = quotients(op, y, v, T, dt)
    assert np.all(q >= ev[0] * (1 - 1e-9)) and np.all(q <= ev[-1] * (1 + 1e-9))


def test_random_modal_data_energy(sqrt_profile):
    g = build_grid(40)
    op, quad = assemble_beam_operator(sqrt_profile, g), build_quadrature(sqrt_profile, g)
    modes = clamped_modes(op, 4)
    y, v = random_modal_data(modes, 3, np.random.default_rng(2), n_modes=2)
    rng = np.random.default_rng(2)
    draws = rng.standard_normal((4, 3))
    for j in range(3):
        e = energy(BeamState.from_interior(y[:, j], v[:, j]), quad, g)
        assert e == pytest.approx(0.5 * np.sum(draws[:, j] ** 2), rel=1e-9)


def test_estimate_CT_small(sqrt_profile):
    cls = classify(sqrt_profile)
    g = build_grid(40)
    op = assemble_beam_operator(sqrt_profile, g)
    T = 2 * observability_time(cls)
    dt = fit_time_step(T, 5e-3)
    rep = estimate_CT(sqrt_profile, cls, T, op, dt, mode_count=3, samples=10, seed=1)
    assert rep.lower_bound == pytest.approx(16.0) and rep.upper_bound == pytest.approx(272.0)
    assert rep.C_T_estimate <= rep.quotient_min * (1 + 1e-9)
    assert rep.lower_bound * 0.9 <= rep.C_T_estimate
    assert rep.quotient_max <= rep.upper_bound
    assert rep.c_T == pytest.approx(1 / rep.C_T_estimate)
    assert rep.as_dict()["samples"] == 10
    again = estimate_CT(sqrt_profile, cls, T, op, dt, mode_count=3, samples=10, seed=1)
    np.testing.assert_array_equal(again.sample_quotients, rep.sample_quotients)
    longer = estimate_CT(sqrt_profile, cls, 2 * T, op, dt, mode_count=3, samples=0)
    assert longer.C_T_estimate >= rep.C_T_estimate
    assert np.isnan(longer.quotient_min)


def test_estimate_CT_mode_limit(sqrt_profile):
    g = build_grid(40)
    op = assemble_beam_operator(sqrt_profile, g)
    with pytest.raises(TooManyModes):
        estimate_CT(sqrt_profile, classify(sqrt_profile), 1.0, op, 0.01, mode_count=31)
    with pytest.raises(TooManyModes):
        estimate_CT(sqrt_profile, classify(sqrt_profile), 1.0, assemble_beam_operator(sqrt_profile, build_grid(8)), 0.01, mode_count=8)


def test_bounds_example_scaled_profile():
    from degenbeam.profiles import observability_bounds

    cls = classify(make_power_profile(1.0, scale=4.0))
    assert observability_bounds(cls, 10.0) == (pytest.approx(6.0), pytest.approx(124.0))


def test_single_mode_quotient_closed_form(sqrt_profile):
    # y0 = phi, v0 = 0: trace c cos(k theta), energy lambda / 2
    g = build_grid(50)
    op, quad = assemble_beam_operator(sqrt_profile, g), build_quadrature(sqrt_profile, g)
    m = clamped_modes(op, 2)
    phi, lam = m.modes[1], m.eigenvalues[1]
    T, dt = 0.25, 1e-3
    q = quotient(BeamState.from_interior(phi, 0 * phi), op, T, dt, quad)
    k = np.arange(251)
    theta = 2 * np.arctan(np.sqrt(lam) * dt / 2)
    c = trace_row(g) @ phi
    exact = np.dot(time_weights(250, dt), (c * np.cos(k * theta)) ** 2) / (lam / 2)
    assert q == pytest.approx(exact, rel=1e-9)


def test_constant_coefficient_identities_agree():
    from degenbeam.profiles import DegeneracyProfile, Power

    # a = 1 written as a power profile with exponent 0 (x a'/a = 0), bypassing the degenerate-profile checks
    flat = DegeneracyProfile(Power(0.0))
    traj, quad, g = _bump_run(flat, 100)
    r1 = identity_residual_first(traj, flat, quad, g).relative_residual
    r2 = identity_residual_second(traj, flat, quad, g).relative_residual
    assert r1 < 0.05 and r2 < 0.05
    assert 0.1 < r1 / r2 < 10


def test_CT_non_increasing_in_mode_count(sqrt_profile):
    cls = classify(sqrt_profile)
    op = assemble_beam_operator(sqrt_profile, build_grid(40))
    T = 2 * observability_time(cls)
    dt = fit_time_step(T, 1e-2)
    est = [estimate_CT(sqrt_profile, cls, T, op, dt, mode_count=m, samples=0).C_T_estimate for m in (1, 2, 4)]
    assert est[0] >= est[1] * (1 - 1e-12) >= est[2] * (1 - 1e-12)


def test_one_mode_CT_close_to_fundamental_quotient(sqrt_profile):
    # the one-mode span holds (phi/omega, 0) and (0, phi); for T much longer than the
    # period both data give nearly the same quotient and C_T approaches it
    cls = classify(sqrt_profile)
    g = build_grid(40)
    op, quad = assemble_beam_operator(sqrt_profile, g), build_quadrature(sqrt_profile, g)
    T = 2 * observability_time(cls)
    dt = fit_time_step(T, 1e-2)
    rep = estimate_CT(sqrt_profile, cls, T, op, dt, mode_count=1, samples=0)
    phi = clamped_modes(op, 1).modes[0]
    q = quotient(BeamState.from_interior(phi, 0 * phi), op, T, dt, quad)
    assert rep.C_T_estimate <= q * (1 + 1e-12)
    assert rep.C_T_estimate == pytest.approx(q, rel=1e-2)

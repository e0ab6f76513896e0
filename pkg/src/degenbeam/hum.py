"""Null control at x = 1 by the Hilbert Uniqueness Method.

Terminal data V_T of the backward clamped problem are sought in the span of
the lowest ``filter_modes`` clamped modes.  In the H_0-orthonormal basis
W_1 .. W_2m of that span the bilinear form

    Lambda(V, W) = int_0^T v_xx(t,1) w_xx(t,1) dt

is the Gramian G = O^T M_t O, where column i of O is the boundary trace of
the backward solution from W_i and M_t holds trapezoidal time weights.
Conjugate gradient solves (G + tikhonov I) x = b with b_i = L(W_i) and the
control is f = O x.

The controlled terminal pair (u(T), u_t(T)) is defined by transposition:

    <u_t(T), w0> - <u(T), w1>_{1/a} = L(W) - int_0^T f w_xx(t,1) dt

for every terminal datum W = (w0, w1).  It is computed on the whole discrete
space by a forward sweep of lifted variables (see :func:`controlled_sweep`),
so the identity above holds to roundoff for all W, not only for the filtered ones.
Dual elements (u1 and u_t) are represented by vectors z acting through the
pivot product <z, w> = int z w / a.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .discretization import (
    BeamOperator,
    Grid,
    WeightedQuadrature,
    assemble_beam_operator,
    banded_apply,
    build_quadrature,
    clamped_modes,
    h2_seminorm_sq,
    trace_row,
    weighted_l2_norm_sq,
)
from .dynamics import (
    BeamState,
    MidpointStepper,
    TraceSeries,
    count_steps,
    energies,
    propagate_traces,
    solve_backward,
    time_weights,
)
from .errors import ControlSynthesisFailed, TimeGridMismatch
from .observability import energy_basis
from .profiles import classify, observability_time

log = logging.getLogger(__name__)


@dataclass
class ControlProblem:
    """Data (u0, u1) on the grid nodes, horizon T and solver settings.

    ``u1`` is the pivot representative of the initial velocity, a dual
    element acting by w -> int u1 w / a.  T must exceed the minimal
    observability time unless ``allow_short_time`` is set, in which case a
    warning is recorded in ``warnings``.
    """

    u0: np.ndarray
    u1: np.ndarray
    T: float
    profile: object
    grid: Grid
    dt: float
    filter_modes: int = 10
    cg_tol: float = 1e-10
    max_iter: int = 500
    tikhonov: float = 0.0
    allow_short_time: bool = False
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=float)
        self.u1 = np.asarray(self.u1, dtype=float)
        n = self.grid.n_cells + 1
        if self.u0.shape != (n,) or self.u1.shape != (n,):
            raise ValueError(f"u0 and u1 must have {n} node values")
        for name, u in (("u0", self.u0), ("u1", self.u1)):
            if u[0] != 0.0 or u[-1] != 0.0:
                raise ValueError(f"{name} must vanish at both ends")
        if self.filter_modes < 1:
            raise ValueError("filter_modes must be at least 1")
        if self.tikhonov < 0:
            raise ValueError("tikhonov must be non-negative")
        count_steps(self.T, self.dt)
        T0 = observability_time(classify(self.profile))
        if not self.T > T0:
            msg = f"T = {self.T:g} does not exceed the observability time T0 = {T0:g}"
            if not self.allow_short_time:
                raise ValueError(msg)
            self.warnings.append(msg)
            log.warning(msg)

    @property
    def n_steps(self) -> int:
        return count_steps(self.T, self.dt)


class HUMSystem:
    """Discrete operators and the filtered modal Gramian of one problem.

    Each basis datum costs one backward solve; they are propagated together
    as columns of one matrix.
    """

    def __init__(self, problem: ControlProblem):
        self.problem = problem
        self.grid = problem.grid
        self.op: BeamOperator = assemble_beam_operator(problem.profile, problem.grid)
        self.quad: WeightedQuadrature = build_quadrature(problem.profile, problem.grid)
        self.stepper = MidpointStepper(self.op, problem.dt)
        # traces of the batched backward solves do not need the energy-exact step
        self.batch_stepper = MidpointStepper(self.op, problem.dt, refine=False)
        self.modes = clamped_modes(self.op, problem.filter_modes)
        self.basis_y, self.basis_v = energy_basis(self.modes)
        self.n_steps = problem.n_steps
        self.time_weights = time_weights(self.n_steps, problem.dt)

    @cached_property
    def _backward(self):
        # y(s) = w(T - s) solves the forward problem from (w0, -w1)
        traces, (y_end, v_end) = propagate_traces(
            self.op, self.basis_y, -self.basis_v, self.problem.dt, self.n_steps, self.batch_stepper
        )
        return traces[::-1].copy(), y_end, -v_end

    @property
    def observation(self) -> np.ndarray:
        """O[k, i] = w_i,xx(t_k, 1) for the basis data W_i."""
        return self._backward[0]

    @property
    def initial_states(self):
        """(w_i(0), w_i,t(0)) for every basis datum, as (N-1, 2m) interior matrices."""
        return self._backward[1], self._backward[2]

    @cached_property
    def gram(self) -> np.ndarray:
        O = self.observation
        G = O.T @ (self.time_weights[:, None] * O)
        return 0.5 * (G + G.T)

    @property
    def dimension(self) -> int:
        return self.basis_y.shape[1]

    def gramian_apply(self, coords) -> np.ndarray:
        O = self.observation
        return O.T @ (self.time_weights * (O @ np.asarray(coords, dtype=float)))

    def energy_normalized_eigenvalues(self) -> np.ndarray:
        # basis data carry energy 1/2 each
        return 2.0 * sla.eigvalsh(self.gram)

    def coordinates(self, V: BeamState) -> np.ndarray:
        """H_0 inner products of V with the basis (exact coordinates when V lies in the span)."""
        h = self.grid.h
        # B y cancels heavily for rough y; evaluate it in extended precision
        ab = np.asarray(self.op.stiffness_banded, dtype=np.longdouble)
        By = banded_apply(ab, np.asarray(V.y_int, dtype=np.longdouble)).astype(float)
        return h * (self.basis_y.T @ By + self.basis_v.T @ (self.op.inv_a * V.v_int))

    def state(self, coords) -> BeamState:
        coords = np.asarray(coords, dtype=float)
        return BeamState.from_interior(self.basis_y @ coords, self.basis_v @ coords, self.problem.T)

    def pivot(self, u, w_int) -> np.ndarray:
        """int u w / a for node vector u against interior columns w."""
        return (self.grid.h * self.op.inv_a * u[1:-1]) @ w_int


def observation_map(V_T: BeamState, T: float, dt: float, op: BeamOperator, quad: WeightedQuadrature) -> TraceSeries:
    """Boundary trace v_xx(t, 1) on [0, T] of the backward solution with v(T) = V_T."""
    return solve_backward(V_T, T, dt, op, quad).trace


def gramian_apply(V_T: BeamState, system: HUMSystem) -> np.ndarray:
    """G applied to V_T expressed in the filtered basis (V_T is projected first)."""
    return system.gramian_apply(system.coordinates(V_T))


def rhs_functional(problem: ControlProblem, system: HUMSystem | None = None) -> np.ndarray:
    """b_i = <u1, w_i(0)> - int u0 w_i,t(0) / a for the filtered basis."""
    system = system or HUMSystem(problem)
    w0, wt0 = system.initial_states
    return system.pivot(problem.u1, w0) - system.pivot(problem.u0, wt0)


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def conjugate_gradient(apply, b, tol: float = 1e-10, max_iter: int = 500) -> CGResult:
    """Plain CG from a zero initial guess; ``tol`` is relative to ||b||.

    Returns the iterate with the smallest residual seen if the tolerance is
    not reached.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGResult(x, 0, 0.0, True)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    best = CGResult(x.copy(), 0, 1.0, False)
    for k in range(1, max_iter + 1):
        Ap = apply(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            break
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = float(r @ r)
        res = np.sqrt(rr_new) / bnorm
        if res < best.residual:
            best = CGResult(x.copy(), k, res, False)
        if res <= tol:
            true_res = float(np.linalg.norm(b - apply(x))) / bnorm
            if true_res <= tol:
                return CGResult(x, k, true_res, True)
            # recursive residual drifted: restart from the true residual
            r = b - apply(x)
            p = r.copy()
            rr = float(r @ r)
            continue
        p = r + (rr_new / rr) * p
        rr = rr_new
    best.residual = float(np.linalg.norm(b - apply(best.x))) / bnorm
    return best


@dataclass(frozen=True)
class NullControlCheck:
    """Terminal pair of the controlled problem and its size.

    The three leading fields are measured on the filtered modes; the
    ``full_*`` fields include every discrete mode (high-frequency spill-over).
    Norms are ||u(T)|| in L^2_{1/a} and ||u_t(T)|| in the dual of H^2; the
    energy is half the sum of their squares.
    """

    terminal_state_norm: float
    terminal_velocity_norm: float
    energy_reduction: float
    initial_energy: float
    terminal_energy: float
    full_terminal_state_norm: float
    full_terminal_velocity_norm: float
    full_energy_reduction: float
    u_T: np.ndarray = field(repr=False)
    ut_T: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.terminal_state_norm, self.terminal_velocity_norm, self.energy_reduction))


@dataclass(frozen=True)
class HUMSolution:
    V_bar: BeamState
    control: TraceSeries
    iterations: int
    cg_residual: float
    terminal_state_norm: float
    terminal_velocity_norm: float
    energy_reduction: float
    coordinates: np.ndarray = field(repr=False)
    check: NullControlCheck = field(repr=False)
    warnings: tuple = ()

    @property
    def cost(self) -> float:
        """int_0^T f^2 dt."""
        return self.control.integral_sq()

    def summary(self) -> dict:
        c = self.check
        return {
            "iterations": self.iterations,
            "cg_residual": self.cg_residual,
            "control_l2_sq": self.cost,
            "terminal_state_norm": self.terminal_state_norm,
            "terminal_velocity_norm": self.terminal_velocity_norm,
            "energy_reduction": self.energy_reduction,
            "initial_energy": c.initial_energy,
            "terminal_energy": c.terminal_energy,
            "full_terminal_state_norm": c.full_terminal_state_norm,
            "full_terminal_velocity_norm": c.full_terminal_velocity_norm,
            "full_energy_reduction": c.full_energy_reduction,
            "warnings": list(self.warnings),
        }


def _stiffness_cholesky(op: BeamOperator) -> np.ndarray:
    return sla.cholesky_banded(np.array(op.stiffness_banded), lower=False)


def controlled_sweep(problem: ControlProblem, control, system: HUMSystem):
    """March the controlled problem forward in lifted variables.

    The state S = (s, -u) is the H_0 Riesz representative of the functional
    W -> L(W) - int f w_xx(., 1) dt, restricted to the backward solutions
    through time t.  Since the midpoint step Phi preserves the discrete H_0
    form Q, the transpose of the backward step equals Q Phi Q^{-1}, so S is
    advanced by the ordinary forward step plus a boundary source.  Here
    u is the deflection and u_t = a B s is the pivot representative of the
    velocity.  Returns the interior pair (s, -u) at t = T.
    """
    f = np.asarray(getattr(control, "samples", control), dtype=float)
    if f.shape != (system.n_steps + 1,):
        raise TimeGridMismatch(f"control has {f.size} samples, time grid has {system.n_steps + 1}")
    op = system.op
    h = system.grid.h
    chol = _stiffness_cholesky(op)
    # Riesz representative of the trace functional y -> y_xx(1)
    source = sla.cho_solve_banded((chol, False), trace_row(system.grid), check_finite=False) / h
    u1 = problem.u1[1:-1]
    s = sla.cho_solve_banded((chol, False), op.inv_a * u1, check_finite=False) if np.any(u1) else np.zeros_like(u1)
    q = -problem.u0[1:-1].copy()
    mu = system.time_weights
    s = s - mu[0] * f[0] * source
    for k in range(1, system.n_steps + 1):
        s, q = system.stepper.step(s, q, problem.dt)
        if f[k] != 0.0:
            s = s - mu[k] * f[k] * source
    return s, q


def verify_null_control(problem: ControlProblem, control, system: HUMSystem | None = None) -> NullControlCheck:
    """Controlled terminal pair by transposition, and its size relative to the data."""
    system = system or HUMSystem(problem)
    op = system.op
    grid = system.grid
    s, q = controlled_sweep(problem, control, system)
    u_T = -q
    ut_T = op.profile_values * op.apply_stiffness(s)

    # ||(s, -u)||_{H_0}^2 = ||u_t||_{(H^2)*}^2 + ||u||_{1/a}^2
    s0 = _initial_lift(problem, system)
    quad = system.quad
    initial = float(energies(grid.to_nodes(s0[0]), grid.to_nodes(s0[1]), quad, grid))
    full_state = np.sqrt(weighted_l2_norm_sq(grid.to_nodes(u_T), quad))
    full_vel = np.sqrt(h2_seminorm_sq(grid.to_nodes(s), grid))
    full_terminal = 0.5 * (full_state**2 + full_vel**2)

    # filtered part: H_0 coordinates of the lifted state on the energy basis
    m = system.modes.modes.shape[0]
    coords = system.coordinates(BeamState.from_interior(s, q))
    filt_vel = float(np.linalg.norm(coords[:m]))
    filt_state = float(np.linalg.norm(coords[m:]))
    terminal = 0.5 * float(coords @ coords)
    # the modal span is invariant under the step, so the filtered energy of
    # the lifted data equals |b|^2 / 2 without depending on the backward batch
    c0 = system.coordinates(BeamState.from_interior(s0[0], s0[1]))
    reference = 0.5 * float(c0 @ c0)
    return NullControlCheck(
        terminal_state_norm=filt_state,
        terminal_velocity_norm=filt_vel,
        energy_reduction=terminal / reference if reference > 0 else 0.0,
        initial_energy=initial,
        terminal_energy=terminal,
        full_terminal_state_norm=float(full_state),
        full_terminal_velocity_norm=float(full_vel),
        full_energy_reduction=float(full_terminal / initial) if initial > 0 else 0.0,
        u_T=grid.to_nodes(u_T),
        ut_T=grid.to_nodes(ut_T),
    )


def duality_residual(problem: ControlProblem, control, W: BeamState, system: HUMSystem | None = None) -> float:
    """Relative defect of the transposition identity for one terminal datum W.

    Checks <u_t(T), w0> - <u(T), w1> = L(W) - int f w_xx(., 1) dt, where w
    solves the backward problem from W and <., .> is the pivot product.
    """
    system = system or HUMSystem(problem)
    check = verify_null_control(problem, control, system)
    f = np.asarray(getattr(control, "samples", control), dtype=float)
    back = solve_backward(W, problem.T, problem.dt, system.op, system.quad, system.grid, system.stepper)
    h = system.grid.h
    inv_a = np.concatenate([[0.0], system.op.inv_a, [0.0]])

    def pair(u, w):
        return h * float(np.sum(u * w * inv_a))

    lhs = pair(check.ut_T, W.y) - pair(check.u_T, W.v)
    L = pair(problem.u1, back.y[0]) - pair(problem.u0, back.v[0])
    observed = float(np.dot(system.time_weights, f * back.trace.samples))
    scale = max(abs(lhs), abs(L), abs(observed), np.finfo(float).tiny)
    return abs(lhs - (L - observed)) / scale


def _initial_lift(problem: ControlProblem, system: HUMSystem):
    u1 = problem.u1[1:-1]
    if np.any(u1):
        chol = _stiffness_cholesky(system.op)
        s0 = sla.cho_solve_banded((chol, False), system.op.inv_a * u1, check_finite=False)
    else:
        s0 = np.zeros_like(u1)
    return s0, -problem.u0[1:-1]


def synthesize_control(problem: ControlProblem, system: HUMSystem | None = None) -> HUMSolution:
    """Solve Lambda(V, W) = L(W) on the filtered span and build f = v_xx(., 1).

    Raises ControlSynthesisFailed (with the best iterate attached) if CG
    does not reach ``problem.cg_tol`` within ``problem.max_iter`` iterations.
    """
    system = system or HUMSystem(problem)
    b = rhs_functional(problem, system)
    tik = problem.tikhonov

    def apply(x):
        return system.gramian_apply(x) + tik * x

    cg = conjugate_gradient(apply, b, problem.cg_tol, problem.max_iter)
    V_bar = system.state(cg.x)
    control = TraceSeries(system.observation @ cg.x, problem.dt, problem.T)
    check = verify_null_control(problem, control, system)
    solution = HUMSolution(
        V_bar=V_bar,
        control=control,
        iterations=cg.iterations,
        cg_residual=cg.residual,
        terminal_state_norm=check.terminal_state_norm,
        terminal_velocity_norm=check.terminal_velocity_norm,
        energy_reduction=check.energy_reduction,
        coordinates=cg.x,
        check=check,
        warnings=tuple(problem.warnings),
    )
    if not cg.converged:
        raise ControlSynthesisFailed(
            f"CG stopped at relative residual {cg.residual:.3e} after {problem.max_iter} iterations",
            best=solution,
        )
    return solution

"""Energy-conserving time integration of y_tt + a y_xxxx = 0 with clamped ends.

The first-order system (y, v)' = (v, -A_h y) is advanced by the implicit
midpoint rule.  With D = diag(1/a), c = dt^2/4 and the midpoint velocity w,

    (D + c B) w = D v0 - (dt/2) B y0,     y1 = y0 + dt w,     v1 = 2 w - v0,

a symmetric positive definite pentadiagonal system that is Cholesky-factored
once per (operator, |dt|) and reused for every step.  Solving for w rather
than y1 avoids the cancellation in (y1 - y0)/dt.  The discrete energy
(h/2)(v^T D v + y^T B y) is conserved exactly by the scheme.

B has condition number O(h^-4), so a plain double precision solve leaves a
backward error of size eps * cond per step that shows up as a slow secular
energy drift over tens of thousands of steps.  By default the right-hand
side and one residual correction are therefore evaluated in extended
precision (``np.longdouble``), which keeps the drift at the 1e-13 level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.linalg as sla

from .discretization import (
    BeamOperator,
    Grid,
    WeightedQuadrature,
    banded_apply,
    h2_seminorm_sq,
    second_difference,
    trace_row,
    trapezoid_weights,
    weighted_l2_norm_sq,
)
from .errors import InternalSolverFailure, TimeGridMismatch

_TIME_GRID_TOL = 1e-12


@dataclass(frozen=True)
class BeamState:
    """Deflection ``y`` and velocity ``v`` on all grid nodes at time ``t``."""

    y: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if y.shape != v.shape or y.ndim != 1:
            raise ValueError("y and v must be 1-D arrays of the same length")
        if y[0] != 0.0 or y[-1] != 0.0 or v[0] != 0.0 or v[-1] != 0.0:
            raise ValueError("clamped state must vanish at x = 0 and x = 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_interior(cls, y_int, v_int, t: float = 0.0) -> "BeamState":
        return cls(np.pad(np.asarray(y_int, float), 1), np.pad(np.asarray(v_int, float), 1), t)

    @classmethod
    def zero(cls, grid: Grid, t: float = 0.0) -> "BeamState":
        z = np.zeros(grid.n_cells + 1)
        return cls(z, z.copy(), t)

    @property
    def y_int(self) -> np.ndarray:
        return self.y[1:-1]

    @property
    def v_int(self) -> np.ndarray:
        return self.v[1:-1]


@dataclass(frozen=True)
class TraceSeries:
    """Samples of y_xx(t_k, 1) at t_k = k dt, k = 0 .. round(T/dt)."""

    samples: np.ndarray
    dt: float
    T: float

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.dt

    def integral_sq(self) -> float:
        return float(np.dot(time_weights(len(self.samples) - 1, self.dt), self.samples**2))

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class Trajectory:
    """Node values y[k], v[k] at t_k = k dt, plus energies and the boundary trace."""

    y: np.ndarray
    v: np.ndarray
    energies: np.ndarray
    trace: TraceSeries

    @property
    def dt(self) -> float:
        return self.trace.dt

    @property
    def times(self) -> np.ndarray:
        return self.trace.times

    @property
    def states(self) -> list[BeamState]:
        return list(self.iter_states())

    def iter_states(self) -> Iterator[BeamState]:
        for k, t in enumerate(self.times):
            yield BeamState(self.y[k], self.v[k], float(t))

    def state(self, k: int) -> BeamState:
        return BeamState(self.y[k], self.v[k], float(k * self.dt))

    def __len__(self):
        return len(self.energies)


def time_weights(n_steps: int, dt: float) -> np.ndarray:
    """Trapezoidal weights for samples at k dt, k = 0 .. n_steps."""
    w = np.full(n_steps + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def count_steps(T: float, dt: float) -> int:
    """Number of steps of size ``dt`` covering [0, T] exactly."""
    if not T > 0 or not dt > 0:
        raise ValueError("T and dt must be positive")
    if dt > T * (1 + _TIME_GRID_TOL):
        raise TimeGridMismatch(f"dt = {dt} exceeds T = {T}")
    n = round(T / dt)
    if abs(n * dt - T) > _TIME_GRID_TOL * max(1.0, T):
        raise TimeGridMismatch(f"T = {T} is not an integer multiple of dt = {dt}")
    return int(n)


def fit_time_step(T: float, dt_max: float | None = None) -> float:
    """Largest step <= dt_max that divides T; dt_max defaults to min(1e-3, T/1000)."""
    if dt_max is None:
        dt_max = min(1e-3, T / 1000.0)
    n = max(1, math.ceil(T / dt_max - 1e-9))
    return T / n


class MidpointStepper:
    """Implicit midpoint propagator for one operator and one step size.

    Arrays passed to :meth:`step` hold interior values, either as vectors or
    as (N-1, m) matrices of independent columns.  ``refine=False`` skips the
    extended precision correction (faster, with ~1e-9 drift on long runs).
    """

    def __init__(self, op: BeamOperator, dt: float, refine: bool = True):
        if dt == 0:
            raise ValueError("dt must be nonzero")
        self.op = op
        self.dt = float(dt)
        self.refine = bool(refine)
        self._c = 0.25 * dt * dt
        self._d = op.inv_a
        self._ab_ld = np.asarray(op.stiffness_banded, dtype=np.longdouble)
        self._d_ld = np.asarray(self._d, dtype=np.longdouble)
        ab = np.array(op.stiffness_banded) * self._c
        ab[2] += self._d
        try:
            self._chol = sla.cholesky_banded(ab, lower=False)
        except np.linalg.LinAlgError as exc:
            raise InternalSolverFailure(f"midpoint system not positive definite: {exc}") from exc

    def _solve(self, rhs):
        return sla.cho_solve_banded((self._chol, False), rhs, check_finite=False)

    def _col(self, d, like):
        return d[:, None] if like.ndim == 2 else d

    def step(self, y, v, dt: float | None = None):
        """Advance (y, v) by ``dt`` (default: the stepper's dt; -dt reverses)."""
        dt = self.dt if dt is None else dt
        if abs(abs(dt) - abs(self.dt)) > 1e-15 * abs(self.dt):
            raise ValueError("stepper was factored for a different |dt|")
        if not self.refine:
            d = self._col(self._d, y)
            w = self._solve(d * v - (0.5 * dt) * self.op.apply_stiffness(y))
            return y + dt * w, 2.0 * w - v
        ld = np.longdouble
        d = self._col(self._d_ld, y)
        yl, vl = np.asarray(y, dtype=ld), np.asarray(v, dtype=ld)
        rhs = d * vl - ld(0.5 * dt) * banded_apply(self._ab_ld, yl)
        w = np.asarray(self._solve(rhs.astype(float)), dtype=ld)
        r = rhs - (d * w + ld(self._c) * banded_apply(self._ab_ld, w))
        w += self._solve(r.astype(float))
        return (yl + ld(dt) * w).astype(float), (2.0 * w - vl).astype(float)

    def step_transpose(self, p, q, dt: float | None = None):
        """Apply the Euclidean transpose of :meth:`step` to the pair (p, q)."""
        dt = self.dt if dt is None else dt
        d = self._col(self._d, p)
        z = self._solve(dt * p + 2.0 * q)
        return p - (0.5 * dt) * self.op.apply_stiffness(z), d * z - q


def step_midpoint(state: BeamState, dt: float, op: BeamOperator) -> BeamState:
    """One implicit midpoint step from ``state``; negative ``dt`` steps backward."""
    y1, v1 = MidpointStepper(op, dt).step(state.y_int, state.v_int)
    return BeamState.from_interior(y1, v1, state.t + dt)


def energy(state: BeamState, quad: WeightedQuadrature, grid: Grid) -> float:
    """E = (1/2) (int v^2/a + int y_xx^2) on the grid."""
    return 0.5 * (weighted_l2_norm_sq(state.v, quad) + h2_seminorm_sq(state.y, grid))


def energies(y, v, quad: WeightedQuadrature, grid: Grid) -> np.ndarray:
    """Energies of a stack of node vectors (last axis = space).

    The second differences cancel to about eps / h^2 in double precision, which
    would blur a 1e-12 drift measurement, so the sums run in ``np.longdouble``.
    """
    ld = np.longdouble
    d2 = second_difference(np.asarray(y, dtype=ld), grid, clamped=True)
    v = np.asarray(v, dtype=ld)
    e = 0.5 * (v**2 @ quad.weights_inv_a.astype(ld) + d2**2 @ trapezoid_weights(grid).astype(ld))
    return e.astype(float)


def modal_energy(y_int, v_int, op: BeamOperator):
    """Same energy computed from interior values as (h/2)(v^T D v + y^T B y)."""
    h = op.grid.h
    d = op.inv_a if np.ndim(v_int) == 1 else op.inv_a[:, None]
    return 0.5 * h * (np.sum(d * v_int**2, axis=0) + np.sum(y_int * op.apply_stiffness(y_int), axis=0))


def propagate_traces(op: BeamOperator, y0, v0, dt: float, n_steps: int, stepper: MidpointStepper | None = None):
    """Boundary traces y_xx(t_k, 1) for many initial data at once.

    ``y0``/``v0`` are (N-1, m) interior matrices.  Returns an (n_steps+1, m)
    array and the final (y, v).  The default stepper skips the extended
    precision correction, which affects the traces only at roundoff level.
    """
    stepper = stepper or MidpointStepper(op, dt, refine=False)
    c = trace_row(op.grid)
    y, v = np.array(y0, dtype=float), np.array(v0, dtype=float)
    out = np.empty((n_steps + 1,) + y.shape[1:])
    out[0] = c @ y
    for k in range(1, n_steps + 1):
        y, v = stepper.step(y, v, dt)
        out[k] = c @ y
    return out, (y, v)


def solve_homogeneous(
    initial: BeamState,
    T: float,
    dt: float,
    op: BeamOperator,
    quad: WeightedQuadrature,
    grid: Grid | None = None,
    stepper: MidpointStepper | None = None,
) -> Trajectory:
    """Integrate the clamped problem from ``initial`` over [0, T]."""
    grid = grid or op.grid
    n = count_steps(T, dt)
    stepper = stepper or MidpointStepper(op, dt)
    n_int = grid.n_unknowns
    ys = np.zeros((n + 1, n_int + 2))
    vs = np.zeros((n + 1, n_int + 2))
    y, v = initial.y_int.copy(), initial.v_int.copy()
    ys[0, 1:-1], vs[0, 1:-1] = y, v
    for k in range(1, n + 1):
        y, v = stepper.step(y, v, dt)
        ys[k, 1:-1], vs[k, 1:-1] = y, v
    trace = ys[:, 1:-1] @ trace_row(grid)
    return Trajectory(ys, vs, energies(ys, vs, quad, grid), TraceSeries(trace, dt, T))


def solve_backward(
    V_T: BeamState,
    T: float,
    dt: float,
    op: BeamOperator,
    quad: WeightedQuadrature,
    grid: Grid | None = None,
    stepper: MidpointStepper | None = None,
) -> Trajectory:
    """Solution on [0, T] of the problem with terminal data ``V_T`` at t = T.

    Computed as y(s) = v(T - s): a forward solve from (v_T^0, -v_T^1), read
    in reverse order with the velocity sign flipped.
    """
    flipped = BeamState(V_T.y, -V_T.v, 0.0)
    fwd = solve_homogeneous(flipped, T, dt, op, quad, grid, stepper)
    trace = TraceSeries(fwd.trace.samples[::-1].copy(), dt, T)
    return Trajectory(fwd.y[::-1].copy(), -fwd.v[::-1], fwd.energies[::-1].copy(), trace)

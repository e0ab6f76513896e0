"""Boundary-trace identities, observability quotients and the constant C_T.

All space-time integrals use the trapezoidal rule in time and the grid
quadratures in space; the factors involving x a'/a are evaluated from the
profile, never by differencing a.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .discretization import (
    BeamOperator,
    Grid,
    ModalBasis,
    WeightedQuadrature,
    clamped_modes,
    first_difference,
    second_difference,
    trapezoid_weights,
)
from .dynamics import (
    BeamState,
    MidpointStepper,
    Trajectory,
    count_steps,
    energy,
    modal_energy,
    propagate_traces,
    time_weights,
)
from .errors import TooManyModes, ZeroEnergyData
from .profiles import DegeneracyClass, DegeneracyProfile, observability_bounds

__all__ = [
    "IdentityReport",
    "ObservabilityReport",
    "Which",
    "estimate_CT",
    "identity_residual_first",
    "identity_residual_second",
    "modal_gramian",
    "observability_bounds",
    "quotient",
    "quotients",
    "random_modal_data",
]

_RESIDUAL_FLOOR = 1e-14


class Which(str, enum.Enum):
    First = "first"
    Second = "second"


@dataclass(frozen=True)
class IdentityReport:
    lhs: float
    rhs: float
    relative_residual: float
    which: Which
    terms: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def build(cls, lhs, terms, which):
        rhs = float(sum(terms))
        scale = max(abs(lhs), abs(rhs), _RESIDUAL_FLOOR)
        return cls(float(lhs), rhs, abs(lhs - rhs) / scale, which, tuple(float(t) for t in terms))


def _slope_factor(profile, grid: Grid) -> np.ndarray:
    s = np.zeros(grid.n_cells + 1)
    s[1:] = profile.log_slope(grid.nodes[1:])
    return s


def _identity_pieces(traj: Trajectory, grid: Grid):
    mu = time_weights(len(traj) - 1, traj.dt)
    lhs = 0.5 * float(np.dot(mu, traj.trace.samples**2))
    yx = first_difference(traj.y, grid)
    yxx = second_difference(traj.y, grid, clamped=True)
    return mu, lhs, yx, yxx


def identity_residual_first(
    traj: Trajectory, profile, quad: WeightedQuadrature, grid: Grid
) -> IdentityReport:
    """Residual of the x^2 y_x / a multiplier identity for the boundary trace.

    (1/2) int y_xx(t,1)^2 dt
        = [int v (x^2/a) y_x dx]_0^T + (1/2) iint (x/a) v^2 (2 - x a'/a)
          + 3 iint x y_xx^2.
    """
    mu, lhs, yx, yxx = _identity_pieces(traj, grid)
    x = grid.nodes
    s = _slope_factor(profile, grid)
    w = quad.weights_inv_a
    boundary = np.dot(w, x**2 * traj.v[-1] * yx[-1]) - np.dot(w, x**2 * traj.v[0] * yx[0])
    kinetic = 0.5 * np.dot(mu, (traj.v**2 * (x * (2.0 - s))) @ w)
    bending = 3.0 * np.dot(mu, (yxx**2 * x) @ trapezoid_weights(grid))
    return IdentityReport.build(lhs, (boundary, kinetic, bending), Which.First)


def identity_residual_second(
    traj: Trajectory, profile, quad: WeightedQuadrature, grid: Grid
) -> IdentityReport:
    """Residual of the x y_x / a multiplier identity for the boundary trace.

    (1/2) int y_xx(t,1)^2 dt
        = [int x v y_x / a dx]_0^T + (1/2) iint (v^2/a)(1 - x a'/a)
          + (3/2) iint y_xx^2.
    """
    mu, lhs, yx, yxx = _identity_pieces(traj, grid)
    x = grid.nodes
    s = _slope_factor(profile, grid)
    w = quad.weights_inv_a
    boundary = np.dot(w, x * traj.v[-1] * yx[-1]) - np.dot(w, x * traj.v[0] * yx[0])
    kinetic = 0.5 * np.dot(mu, (traj.v**2 * (1.0 - s)) @ w)
    bending = 1.5 * np.dot(mu, (yxx**2) @ trapezoid_weights(grid))
    return IdentityReport.build(lhs, (boundary, kinetic, bending), Which.Second)


def quotients(op: BeamOperator, y0, v0, T: float, dt: float, stepper: MidpointStepper | None = None) -> np.ndarray:
    """int_0^T y_xx(t,1)^2 dt / E(0) for each column of the (N-1, m) data."""
    n = count_steps(T, dt)
    y0 = np.asarray(y0, dtype=float).reshape(op.grid.n_unknowns, -1)
    v0 = np.asarray(v0, dtype=float).reshape(op.grid.n_unknowns, -1)
    e0 = modal_energy(y0, v0, op)
    if np.any(e0 <= 0.0):
        raise ZeroEnergyData("observability quotient needs data with positive energy")
    traces, _ = propagate_traces(op, y0, v0, dt, n, stepper)
    return time_weights(n, dt) @ traces**2 / e0


def quotient(initial: BeamState, op: BeamOperator, T: float, dt: float, quad: WeightedQuadrature | None = None) -> float:
    """Observability quotient of a single datum."""
    if quad is not None and energy(initial, quad, op.grid) <= 0.0:
        raise ZeroEnergyData("observability quotient needs data with positive energy")
    return float(quotients(op, initial.y_int, initial.v_int, T, dt)[0])


def energy_basis(modes: ModalBasis) -> tuple[np.ndarray, np.ndarray]:
    """H_0-orthonormal basis of the span of the given modes.

    Returns (Y, V), each (N-1, 2m): columns j < m are (phi_j / omega_j, 0),
    columns m + j are (0, phi_j).  Every column has energy 1/2.
    """
    m, n = modes.modes.shape
    Y = np.zeros((n, 2 * m))
    V = np.zeros((n, 2 * m))
    Y[:, :m] = (modes.modes / modes.frequencies[:, None]).T
    V[:, m:] = modes.modes.T
    return Y, V


def random_modal_data(modes: ModalBasis, count: int, rng: np.random.Generator, n_modes: int | None = None):
    """Random (Y, V) data with standard normal coordinates on the lowest ``n_modes`` modes."""
    m = modes.modes.shape[0]
    n_modes = m if n_modes is None else min(n_modes, m)
    Y, V = energy_basis(modes)
    coeff = np.zeros((2 * m, count))
    draws = rng.standard_normal((2 * n_modes, count))
    coeff[:n_modes] = draws[:n_modes]
    coeff[m : m + n_modes] = draws[n_modes:]
    return Y @ coeff, V @ coeff


@dataclass(frozen=True)
class ModalGramian:
    """Gramian G_ij = int f_i f_j dt of the energy basis and its trace matrix."""

    gram: np.ndarray
    traces: np.ndarray  # (n_steps+1, 2m)
    weights: np.ndarray
    modes: ModalBasis
    T: float
    dt: float

    def energy_normalized_eigenvalues(self) -> np.ndarray:
        # basis columns carry energy 1/2
        return 2.0 * sla.eigvalsh(self.gram)


def modal_gramian(op: BeamOperator, modes: ModalBasis, T: float, dt: float, stepper=None) -> ModalGramian:
    n = count_steps(T, dt)
    Y, V = energy_basis(modes)
    traces, _ = propagate_traces(op, Y, V, dt, n, stepper)
    mu = time_weights(n, dt)
    gram = traces.T @ (mu[:, None] * traces)
    gram = 0.5 * (gram + gram.T)
    return ModalGramian(gram, traces, mu, modes, T, dt)


@dataclass(frozen=True)
class ObservabilityReport:
    T: float
    quotient_min: float
    quotient_max: float
    lower_bound: float
    upper_bound: float
    C_T_estimate: float
    samples: int
    mode_count: int = 0
    sample_quotients: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def c_T(self) -> float:
        return 1.0 / self.C_T_estimate if self.C_T_estimate > 0 else float("nan")

    def as_dict(self) -> dict:
        return {
            "T": self.T,
            "quotient_min": self.quotient_min,
            "quotient_max": self.quotient_max,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "C_T_estimate": self.C_T_estimate,
            "c_T": None if not self.C_T_estimate > 0 else self.c_T,
            "samples": self.samples,
            "mode_count": self.mode_count,
        }


def estimate_CT(
    profile: DegeneracyProfile,
    cls: DegeneracyClass,
    T: float,
    op: BeamOperator,
    dt: float,
    mode_count: int = 10,
    samples: int = 100,
    seed: int = 0,
) -> ObservabilityReport:
    """Estimate C_T on the span of the lowest ``mode_count`` clamped modes.

    The estimate is the smallest eigenvalue of the trace Gramian relative to
    the energy on that span.  ``samples`` random data in the same span are
    also propagated directly and their quotients reported.
    """
    if mode_count > 30:
        raise TooManyModes(f"mode_count is limited to 30, got {mode_count}")
    modes = clamped_modes(op, mode_count)
    stepper = MidpointStepper(op, dt, refine=False)
    gram = modal_gramian(op, modes, T, dt, stepper)
    ev = gram.energy_normalized_eigenvalues()
    lower, upper = observability_bounds(cls, T)
    if samples > 0:
        rng = np.random.default_rng(seed)
        y0, v0 = random_modal_data(modes, samples, rng)
        q = quotients(op, y0, v0, T, dt, stepper)
        qmin, qmax = float(q.min()), float(q.max())
    else:
        q = np.empty(0)
        qmin = qmax = float("nan")
    return ObservabilityReport(
        T=float(T),
        quotient_min=qmin,
        quotient_max=qmax,
        lower_bound=lower,
        upper_bound=upper,
        C_T_estimate=max(float(ev[0]), 0.0),
        samples=int(samples),
        mode_count=int(mode_count),
        sample_quotients=q,
    )

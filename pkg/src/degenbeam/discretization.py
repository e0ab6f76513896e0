"""Finite-difference discretization of u -> a u'''' with clamped ends.

The unknowns are the node values u_1 .. u_{N-1}; u_0 = u_N = 0 and the slope
conditions u'(0) = u'(1) = 0 are imposed by the reflected ghost values
u_{-1} = u_1 and u_{N+1} = u_{N-1}.  With this closure the stiffness matrix
B (rows (1, -4, 6, -4, 1)/h^4, corner entries 7/h^4) satisfies

    h * u^T B u = trapezoid sum of (D2 u)^2,

where D2 is the centered second difference using the same ghost values, so
that the discrete energy used by the time stepper is exactly the quadrature
of the continuous one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import GridTooCoarse, SingularAtOrigin, TooManyModes

_STENCIL = np.array([1.0, -4.0, 6.0, -4.0, 1.0])


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of [0, 1] with ``n_cells`` cells and nodes x_i = i/N."""

    n_cells: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.arange(self.n_cells + 1, dtype=float) / self.n_cells
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def n_unknowns(self) -> int:
        return self.n_cells - 1

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    def to_nodes(self, u_int):
        """Pad interior values (last axis of length N-1) with the zero boundary values."""
        u_int = np.asarray(u_int, dtype=float)
        pad = [(0, 0)] * (u_int.ndim - 1) + [(1, 1)]
        return np.pad(u_int, pad)


def build_grid(N: int) -> Grid:
    if int(N) != N or N < 8:
        raise GridTooCoarse(f"need at least 8 cells, got {N}")
    return Grid(int(N))


@dataclass(frozen=True)
class WeightedQuadrature:
    """Trapezoidal weights on the nodes, with the x = 0 node given zero weight.

    ``weights_inv_a`` integrates u^2/a and ``weights_plain`` integrates u^2.
    """

    weights_inv_a: np.ndarray
    weights_plain: np.ndarray
    coefficient: np.ndarray  # a(x_i) at every node, a(0) included


def build_quadrature(coefficient, grid: Grid) -> WeightedQuadrature:
    """Weights for the L^2_{1/a} and L^2 integrals on ``grid``.

    ``coefficient`` is any callable returning a(x) for an array of abscissae
    (a :class:`~degenbeam.profiles.DegeneracyProfile`, or e.g. a constant
    function for non-degenerate comparisons).
    """
    x = grid.nodes
    a = np.asarray(coefficient(x), dtype=float) * np.ones_like(x)
    plain = np.full_like(x, grid.h)
    plain[0] = 0.0
    plain[-1] = 0.5 * grid.h
    inv_a = np.zeros_like(x)
    inv_a[1:] = plain[1:] / a[1:]
    return WeightedQuadrature(inv_a, plain, a)


def weighted_l2_norm_sq(u, quad: WeightedQuadrature) -> float:
    """Approximate int_0^1 u^2 / a dx; ``u`` must vanish at x = 0."""
    u = np.asarray(u, dtype=float)
    if u[0] != 0.0:
        raise SingularAtOrigin(f"u(0) = {u[0]!r}; 1/a-weighted integrals need u(0) = 0")
    return float(np.dot(quad.weights_inv_a, u * u))


def second_difference(u, grid: Grid, clamped: bool = True) -> np.ndarray:
    """Second derivative at every node (last axis).

    Interior nodes use the centered stencil.  At the two ends, ``clamped``
    selects the reflected ghost value (u'(0) = u'(1) = 0); otherwise the
    one-sided second-order stencil is used.  ``np.longdouble`` input is kept
    in extended precision.
    """
    u = np.asarray(u)
    if u.dtype != np.longdouble:
        u = u.astype(float)
    inv_h2 = float(grid.n_cells) ** 2
    d2 = np.empty_like(u)
    d2[..., 1:-1] = (u[..., :-2] - 2.0 * u[..., 1:-1] + u[..., 2:]) * inv_h2
    if clamped:
        d2[..., 0] = 2.0 * (u[..., 1] - u[..., 0]) * inv_h2
        d2[..., -1] = 2.0 * (u[..., -2] - u[..., -1]) * inv_h2
    else:
        d2[..., 0] = (2.0 * u[..., 0] - 5.0 * u[..., 1] + 4.0 * u[..., 2] - u[..., 3]) * inv_h2
        d2[..., -1] = (2.0 * u[..., -1] - 5.0 * u[..., -2] + 4.0 * u[..., -3] - u[..., -4]) * inv_h2
    return d2


def first_difference(u, grid: Grid) -> np.ndarray:
    """Centered first derivative; zero at both ends (clamped slopes)."""
    u = np.asarray(u, dtype=float)
    d1 = np.zeros_like(u)
    d1[..., 1:-1] = (u[..., 2:] - u[..., :-2]) / (2.0 * grid.h)
    return d1


def trapezoid_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.n_cells + 1, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def h2_seminorm_sq(u, grid: Grid, clamped: bool = True) -> float:
    """Approximate int_0^1 (u'')^2 dx by the trapezoidal rule on second differences."""
    d2 = second_difference(u, grid, clamped)
    return float(np.dot(trapezoid_weights(grid), d2 * d2))


def trace_y_xx_at_1(u, grid: Grid, clamped: bool = True):
    """Second-order approximation of u''(1).

    With ``clamped`` the slope condition u'(1) = 0 is built in and only
    u_N, u_{N-1}, u_{N-2} are read; otherwise the plain one-sided stencil
    (2u_N - 5u_{N-1} + 4u_{N-2} - u_{N-3})/h^2 is used.  Works along the last
    axis, so a stack of states gives a stack of traces.
    """
    u = np.asarray(u, dtype=float)
    h2 = grid.h**2
    if clamped:
        return (8.0 * u[..., -2] - u[..., -3] - 7.0 * u[..., -1]) / (2.0 * h2)
    return (2.0 * u[..., -1] - 5.0 * u[..., -2] + 4.0 * u[..., -3] - u[..., -4]) / h2


def trace_row(grid: Grid) -> np.ndarray:
    """Row vector c with c @ y_int = trace_y_xx_at_1 for clamped interior values."""
    c = np.zeros(grid.n_unknowns)
    c[-1] = 8.0 / (2.0 * grid.h**2)
    c[-2] = -1.0 / (2.0 * grid.h**2)
    return c


def banded_apply(ab, y):
    """Symmetric pentadiagonal product in the dtype of ``ab`` and ``y``."""
    out = (ab[2][:, None] if y.ndim == 2 else ab[2]) * y
    up1, up2 = ab[1, 1:], ab[0, 2:]
    if y.ndim == 2:
        up1, up2 = up1[:, None], up2[:, None]
    out[:-1] += up1 * y[1:]
    out[1:] += up1 * y[:-1]
    out[:-2] += up2 * y[2:]
    out[2:] += up2 * y[:-2]
    return out


@dataclass(frozen=True)
class BeamOperator:
    """The clamped operator u -> a u'''' on the interior unknowns.

    ``matrix`` is the pentadiagonal A_h = diag(a) B; ``stiffness_banded``
    holds the symmetric B in LAPACK upper banded storage.
    """

    grid: Grid
    profile_values: np.ndarray
    stiffness_banded: np.ndarray

    @property
    def matrix(self) -> sp.dia_array:
        return sp.dia_array(sp.diags(self.profile_values) @ self.stiffness)

    @property
    def stiffness(self) -> sp.dia_array:
        ab = self.stiffness_banded
        n = ab.shape[1]
        diags = [ab[2], ab[1, 1:], ab[0, 2:]]
        return sp.dia_array(
            sp.diags([diags[2], diags[1], diags[0], diags[1], diags[2]], [-2, -1, 0, 1, 2], shape=(n, n))
        )

    @property
    def inv_a(self) -> np.ndarray:
        return 1.0 / self.profile_values

    def apply_stiffness(self, y_int):
        """B @ y along the first axis (y may be a matrix of columns)."""
        return banded_apply(self.stiffness_banded, np.asarray(y_int, dtype=float))

    def apply(self, y_int):
        """A_h @ y = a * (B @ y)."""
        a = self.profile_values
        y = np.asarray(y_int, dtype=float)
        return (a[:, None] if y.ndim == 2 else a) * self.apply_stiffness(y)


def assemble_beam_operator(coefficient, grid: Grid) -> BeamOperator:
    n = grid.n_unknowns
    # N^4 is an exact double, so every entry k/h^4 is exact and h y^T B y
    # matches the trapezoid energy to roundoff (entry-wise rounding of 6/h^4
    # and 7/h^4 would otherwise show up as a 1e-12 energy mismatch)
    scale = float(grid.n_cells) ** 4
    ab = np.zeros((3, n))
    ab[0, 2:] = _STENCIL[0] * scale
    ab[1, 1:] = _STENCIL[1] * scale
    ab[2, :] = _STENCIL[2] * scale
    # reflected ghosts u_{-1} = u_1, u_{N+1} = u_{N-1}
    ab[2, 0] += scale
    ab[2, -1] += scale
    a = np.asarray(coefficient(grid.interior), dtype=float) * np.ones(n)
    a.setflags(write=False)
    ab.setflags(write=False)
    return BeamOperator(grid, a, ab)


@dataclass(frozen=True)
class ModalBasis:
    """Lowest clamped modes: B phi = lam diag(1/a) phi with h sum phi^2/a = 1."""

    eigenvalues: np.ndarray
    modes: np.ndarray  # shape (count, N-1), interior values

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)


def clamped_modes(op: BeamOperator, count: int) -> ModalBasis:
    """Lowest ``count`` generalized eigenpairs of (B, diag(1/a)).

    Solved as the symmetric banded problem diag(sqrt a) B diag(sqrt a).  The
    eigenvalues returned by LAPACK carry an absolute error of order eps ||B||,
    i.e. a relative error near 1e-8 for the lowest modes at N = 400, so they
    are replaced by Rayleigh quotients evaluated in extended precision.
    """
    n = op.grid.n_unknowns
    if count < 1 or count > n:
        raise TooManyModes(f"requested {count} modes, only {n} interior unknowns")
    s = np.sqrt(op.profile_values)
    ab = np.array(op.stiffness_banded)
    ab[2] *= s * s
    ab[1, 1:] *= s[1:] * s[:-1]
    ab[0, 2:] *= s[2:] * s[:-2]
    lam, psi = sla.eig_banded(ab, lower=False, select="i", select_range=(0, count - 1))
    modes = (s[:, None] * psi / np.sqrt(op.grid.h)).T
    for k in range(count):
        row = modes[k]
        lead = np.flatnonzero(np.abs(row) > 1e-8 * np.abs(row).max())[0]
        if row[lead] < 0:
            modes[k] = -row
    ld = np.longdouble
    P = modes.T.astype(ld)
    num = np.sum(P * banded_apply(np.asarray(op.stiffness_banded, dtype=ld), P), axis=0)
    den = np.sum(P * P * np.asarray(op.inv_a, dtype=ld)[:, None], axis=0)
    return ModalBasis((num / den).astype(float), modes)


def generalized_eigenvalues(op: BeamOperator, count: int = 1) -> np.ndarray:
    return clamped_modes(op, count).eigenvalues

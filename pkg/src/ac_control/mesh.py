"""Uniform 1D mesh on [-L, L] and its discrete calculus.

Nodes x_j = -L + j*h carry trapezoid (lumped) mass weights m_j (h in the
interior, h/2 at the two boundary nodes), so nonlinear nodal terms stay
diagonal.  Gradients live on edge midpoints x_{j+1/2}.  The divergence
uses zero ghost fluxes, which encodes the homogeneous Neumann condition
and makes the summation-by-parts identity

    (neumann_divergence(q), phi)_X  =  -h * sum_e q_e * (forward_diff phi)_e

exact up to rounding.  That exactness is what later makes the discrete
adjoint the literal transpose of the discrete linearization.

Also here: Thomas elimination for the SPD tridiagonal systems the toolkit
assembles, the discrete Gronwall bound 2^n (A_0 + tau*B_0 + tau*sum C_j),
and Riesz representatives for dual fields stored as pairing coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, SingularSystemError

_PIVOT_FLOOR = 1e-14


def _thomas_sweep(lower, diag, upper, rhs, x, scratch):
    """Forward-elimination / back-substitution kernel.

    Returns 0 on success, or 1 + (row index) when a pivot falls below the
    breakdown threshold.  Written loop-wise so numba can compile it; the
    pure-Python version is the fallback and computes identical doubles.
    """
    n = diag.shape[0]
    beta = diag[0]
    if abs(beta) < _PIVOT_FLOOR:
        return 1
    if n > 1:
        scratch[0] = upper[0] / beta
    x[0] = rhs[0] / beta
    for j in range(1, n):
        beta = diag[j] - lower[j - 1] * scratch[j - 1]
        if abs(beta) < _PIVOT_FLOOR:
            return j + 1
        if j < n - 1:
            scratch[j] = upper[j] / beta
        x[j] = (rhs[j] - lower[j - 1] * x[j - 1]) / beta
    for j in range(n - 2, -1, -1):
        x[j] = x[j] - scratch[j] * x[j + 1]
    return 0


try:
    from numba import njit

    _thomas = njit(cache=True)(_thomas_sweep)
except ImportError:  # pragma: no cover - exercised only without numba
    _thomas = _thomas_sweep


@dataclass(frozen=True)
class Grid:
    """Uniform mesh: half-length L, J cells, J+1 nodes, trapezoid mass."""

    L: float
    J: int
    h: float
    x: np.ndarray
    mass: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.J + 1


def build_grid(L: float, J: int) -> Grid:
    """Construct the uniform grid on [-L, L] with J >= 2 cells."""
    if not np.isfinite(L) or L <= 0:
        raise ConfigurationError(f"half-length L must be positive, got {L}")
    if int(J) != J or J < 2:
        raise ConfigurationError(f"cell count J must be an integer >= 2, got {J}")
    J = int(J)
    h = 2.0 * L / J
    x = np.linspace(-L, L, J + 1)
    mass = np.full(J + 1, h)
    mass[0] = mass[-1] = 0.5 * h
    x.setflags(write=False)
    mass.setflags(write=False)
    return Grid(L=float(L), J=J, h=h, x=x, mass=mass)


def _check_field(grid: Grid, a: np.ndarray, name: str = "field") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (grid.n_nodes,):
        raise ConfigurationError(
            f"{name} has shape {a.shape}, expected ({grid.n_nodes},) for J={grid.J}")
    return a


def inner_product(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """Mass-weighted inner product (a, b)_X = sum_j m_j a_j b_j."""
    a = _check_field(grid, a, "first field")
    b = _check_field(grid, b, "second field")
    return float(np.dot(grid.mass * a, b))


def x_norm(grid: Grid, a: np.ndarray) -> float:
    """Norm |a|_X induced by inner_product."""
    return float(np.sqrt(inner_product(grid, a, a)))


def edge_inner(grid: Grid, qa: np.ndarray, qb: np.ndarray) -> float:
    """Midpoint inner product h * sum_e qa_e qb_e for edge fields."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    if qa.shape != (grid.J,) or qb.shape != (grid.J,):
        raise ConfigurationError(
            f"edge fields must have shape ({grid.J},), got {qa.shape} and {qb.shape}")
    return grid.h * float(np.dot(qa, qb))


def forward_diff(grid: Grid, a: np.ndarray) -> np.ndarray:
    """Edge-midpoint differences s_{j+1/2} = (a_{j+1} - a_j)/h."""
    a = _check_field(grid, a)
    return (a[1:] - a[:-1]) / grid.h


def neumann_divergence(grid: Grid, q: np.ndarray) -> np.ndarray:
    """Discrete flux divergence with zero ghost fluxes at both ends.

    d_j = (q_{j+1/2} - q_{j-1/2}) / m_j with q_{-1/2} = q_{J+1/2} = 0.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (grid.J,):
        raise ConfigurationError(
            f"edge field has shape {q.shape}, expected ({grid.J},)")
    padded = np.concatenate(([0.0], q, [0.0]))
    return (padded[1:] - padded[:-1]) / grid.mass


def average_edges_to_nodes(grid: Grid, q: np.ndarray) -> np.ndarray:
    """Arithmetic edge-to-node averaging with zero ghost edges."""
    q = np.asarray(q, dtype=float)
    if q.shape != (grid.J,):
        raise ConfigurationError(
            f"edge field has shape {q.shape}, expected ({grid.J},)")
    padded = np.concatenate(([0.0], q, [0.0]))
    return 0.5 * (padded[:-1] + padded[1:])


def trajectory_inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """Time-stacked inner product sum_i (a_i, b_i)_X for (n, J+1) arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != grid.n_nodes:
        raise ConfigurationError(
            f"trajectory shapes {a.shape}, {b.shape} do not match grid "
            f"({grid.n_nodes} nodes)")
    return float(np.sum((a * grid.mass) * b))


def trajectory_norm(grid: Grid, a: np.ndarray) -> float:
    """Norm induced by trajectory_inner."""
    return float(np.sqrt(trajectory_inner(grid, a, a)))


@dataclass(frozen=True)
class TridiagonalSystem:
    """Bands of a tridiagonal matrix; symmetric whenever assembled here."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        n = self.diag.shape[0]
        if self.lower.shape != (n - 1,) or self.upper.shape != (n - 1,):
            raise ConfigurationError(
                "tridiagonal bands must have lengths (n-1, n, n-1), got "
                f"{self.lower.shape}, {self.diag.shape}, {self.upper.shape}")

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.upper * v[1:]
        out[1:] += self.lower * v[:-1]
        return out


def solve_tridiagonal(system: TridiagonalSystem, rhs: np.ndarray) -> np.ndarray:
    """Thomas elimination; raises SingularSystemError on a tiny pivot."""
    rhs = np.ascontiguousarray(rhs, dtype=float)
    if rhs.shape != (system.n,):
        raise ConfigurationError(
            f"rhs has shape {rhs.shape}, expected ({system.n},)")
    x = np.empty(system.n)
    scratch = np.empty(system.n)
    status = _thomas(
        np.ascontiguousarray(system.lower, dtype=float),
        np.ascontiguousarray(system.diag, dtype=float),
        np.ascontiguousarray(system.upper, dtype=float),
        rhs, x, scratch)
    if status != 0:
        raise SingularSystemError(
            f"elimination pivot below {_PIVOT_FLOOR} at row {status - 1}")
    return x


def assemble_tridiagonal(grid: Grid, edge_coeff: np.ndarray,
                         node_coeff: np.ndarray) -> TridiagonalSystem:
    """Assemble S(edge_coeff) + M diag(node_coeff) on the grid.

    S is the stiffness matrix of the edge-coefficient form
    h * sum_e c_e (D a)_e (D b)_e, so row j reads
    (c_{j-1/2} + c_{j+1/2})/h on the diagonal and -c_{j+1/2}/h off it.
    Requires c_e >= 0 and node_coeff > 0: that keeps the matrix strictly
    diagonally dominant with positive diagonal, hence SPD.
    """
    c = np.asarray(edge_coeff, dtype=float)
    d = np.asarray(node_coeff, dtype=float)
    if c.shape != (grid.J,):
        raise ConfigurationError(
            f"edge coefficients have shape {c.shape}, expected ({grid.J},)")
    d = _check_field(grid, d, "node coefficients")
    if np.any(c < 0) or np.any(d <= 0) or not (np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
        raise ConfigurationError(
            "operator assembly requires edge coefficients >= 0 and node "
            "coefficients > 0 (positivity lost)")
    padded = np.concatenate(([0.0], c, [0.0]))
    diag = (padded[:-1] + padded[1:]) / grid.h + grid.mass * d
    off = -c / grid.h
    return TridiagonalSystem(lower=off.copy(), diag=diag, upper=off.copy())


@dataclass(frozen=True)
class DualField:
    """Linear functional on fields, stored as pairing coefficients c_j.

    Pairs as <z, phi> = sum_j c_j phi_j; the Riesz representative against
    the discrete H^1 inner product is computed on demand.
    """

    coeffs: np.ndarray

    def pair(self, phi: np.ndarray) -> float:
        return float(np.dot(self.coeffs, phi))

    @property
    def l1_mass(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))


def riesz_representative(grid: Grid, z: DualField | np.ndarray) -> np.ndarray:
    """Solve (M + S_1) r = c so that <z, phi> = (r, phi)_M + h (Dr, Dphi)."""
    coeffs = z.coeffs if isinstance(z, DualField) else np.asarray(z, dtype=float)
    coeffs = _check_field(grid, coeffs, "dual coefficients")
    system = assemble_tridiagonal(grid, np.ones(grid.J), np.ones(grid.n_nodes))
    return solve_tridiagonal(system, coeffs)


class FieldNorms(NamedTuple):
    L2: float
    H1: float
    C0: float
    C1: float


def field_norms(grid: Grid, a: np.ndarray) -> FieldNorms:
    """L2, H1, C0 and C1 norms of a nodal field (C1 via edge differences)."""
    a = _check_field(grid, a)
    da = forward_diff(grid, a)
    l2sq = inner_product(grid, a, a)
    h1 = float(np.sqrt(l2sq + grid.h * np.dot(da, da)))
    c0 = float(np.max(np.abs(a)))
    c1 = max(c0, float(np.max(np.abs(da))))
    return FieldNorms(L2=float(np.sqrt(l2sq)), H1=h1, C0=c0, C1=c1)


def gronwall_bound(A0: float, B0: float, C: Sequence[float],
                   tau: float, c: float) -> float:
    """Right side 2^n (A_0 + tau*B_0 + tau*sum_j C_j) of the discrete
    Gronwall estimate for nonnegative sequences satisfying

        (1/tau) (A_i - A_{i-1} + tau*B_i) <= c*A_i + C_i,  i = 1..n,

    valid whenever c*tau < 1/2."""
    C = np.asarray(C, dtype=float)
    if A0 < 0 or B0 < 0 or tau < 0 or c < 0 or np.any(C < 0):
        raise ConfigurationError(
            "discrete Gronwall needs nonnegative A0, B0, C, tau and c")
    if c * tau >= 0.5:
        raise ConfigurationError(
            f"discrete Gronwall requires c*tau < 1/2, got c*tau = {c * tau}")
    n = C.shape[0]
    return float(2.0 ** n) * (A0 + tau * B0 + tau * float(np.sum(C)))


def gronwall_holds(A: Sequence[float], B: Sequence[float], C: Sequence[float],
                   tau: float, c: float) -> bool:
    """Companion predicate: A_i + tau*B_i <= gronwall_bound for i = 1..n.

    Callers supply sequences satisfying the recursion; this only checks
    the resulting a-priori bound (with a rounding-level slack).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if A.shape != (n + 1,) or B.shape != (n + 1,):
        raise ConfigurationError(
            "expected len(A) = len(B) = len(C) + 1 for Gronwall sequences")
    bound = gronwall_bound(float(A[0]), float(B[0]), C, tau, c)
    values = A[1:] + tau * B[1:]
    return bool(np.all(values <= bound + 1e-12 * (1.0 + bound)))

"""Linearization and adjoint systems sharing one per-step operator.

Both systems use the SPD tridiagonal

    A_i = (1/tau) M + S(f''(Dw_i) + nu^2) + M diag(g'(w_i) + K'(w_i))

built from a solved state trajectory w.  The linearization marches
forward (chi_0 = 0, forcing M_u h_i), the adjoint backward (p_{n+1} = 0,
forcing v_i); because A_i is symmetric and identical in both recursions,
the discrete duality

    sum_i (p_i, M_u h_i)_X  =  sum_i (v_i, chi_i)_X

holds to rounding, and the control gradient inherits machine-precision
consistency with finite differences.

Also here: the limiting-multiplier functional zeta (computed two
algebraically identical ways, curvature form and defect form) and the
cutoff-localized adjoint residual used to quantify how the adjoint
identity degenerates on the singular set {Dw = 0} as the regularization
parameters shrink.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from . import physics
from .errors import ConfigurationError
from .mesh import (DualField, TridiagonalSystem, average_edges_to_nodes,
                   forward_diff, neumann_divergence, solve_tridiagonal)
from .state import ModelSetup, StateTrajectory, step_system


@dataclass(frozen=True)
class StepOperator:
    """Per-step sensitivity operator with its time index (1-based)."""

    system: TridiagonalSystem
    index: int


def assemble_step_operator(setup: ModelSetup, w_star_i: np.ndarray,
                           index: int = 0) -> StepOperator:
    """Assemble A_i at the given state; refuses invalid setups."""
    setup.ensure_valid()
    return StepOperator(system=step_system(setup, w_star_i), index=index)


@dataclass
class SensitivityTrajectory:
    """Solution fields of one linearization or adjoint sweep.

    fields[i-1] is chi_i or p_i for steps i = 1..n; residuals holds the
    per-step relative linear-solve residuals (inf norm).
    """

    setup: ModelSetup
    fields: np.ndarray
    forcing: np.ndarray
    residuals: List[float]
    direction: str


def _check_traj_input(setup: ModelSetup, arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if arr.shape != (setup.n, setup.grid.n_nodes):
        raise ConfigurationError(
            f"{name} has shape {arr.shape}, expected "
            f"({setup.n}, {setup.grid.n_nodes})")
    return arr


def _sweep(setup: ModelSetup, traj: StateTrajectory, rhs_fields: np.ndarray,
           backward: bool, label: str) -> SensitivityTrajectory:
    """Shared recursion: A_i y_i = M rhs_i + (1/tau) M y_neighbor."""
    grid = setup.grid
    mass = grid.mass
    out = np.zeros((setup.n, grid.n_nodes))
    residuals = [0.0] * setup.n
    neighbor = np.zeros(grid.n_nodes)
    order = range(setup.n, 0, -1) if backward else range(1, setup.n + 1)
    for i in order:
        system = step_system(setup, traj.w[i])
        rhs = mass * rhs_fields[i - 1] + (mass / setup.tau) * neighbor
        y = solve_tridiagonal(system, rhs)
        err = system.matvec(y) - rhs
        residuals[i - 1] = float(
            np.max(np.abs(err)) / (1.0 + np.max(np.abs(rhs))))
        out[i - 1] = y
        neighbor = y
    return SensitivityTrajectory(setup=setup, fields=out, forcing=rhs_fields,
                                 residuals=residuals, direction=label)


def solve_linearization(setup: ModelSetup, traj: StateTrajectory,
                        hdir: np.ndarray) -> SensitivityTrajectory:
    """Forward sensitivity: chi_0 = 0, A_i chi_i = M (M_u h_i) + (1/tau) M chi_{i-1}."""
    setup.ensure_valid()
    hdir = _check_traj_input(setup, hdir, "direction h")
    return _sweep(setup, traj, setup.params.M_u * hdir, backward=False,
                  label="forward")


def solve_adjoint(setup: ModelSetup, traj: StateTrajectory,
                  v: np.ndarray) -> SensitivityTrajectory:
    """Backward sweep: p_{n+1} = 0, A_i p_i = M v_i + (1/tau) M p_{i+1}."""
    setup.ensure_valid()
    v = _check_traj_input(setup, v, "forcing v")
    return _sweep(setup, traj, v, backward=True, label="backward")


def cost_adjoint(setup: ModelSetup, traj: StateTrajectory) -> SensitivityTrajectory:
    """Adjoint for the tracking cost: forcing v_i = M_w (w_i - w_i^ad)."""
    v = setup.params.M_w * (traj.w[1:] - setup.w_ad)
    return solve_adjoint(setup, traj, v)


def duality_gap(setup: ModelSetup, p: SensitivityTrajectory, hdir: np.ndarray,
                v: np.ndarray, chi: SensitivityTrajectory) -> float:
    """| sum_i (p_i, M_u h_i)_X - sum_i (v_i, chi_i)_X |."""
    hdir = _check_traj_input(setup, hdir, "direction h")
    v = _check_traj_input(setup, v, "forcing v")
    mass = setup.grid.mass
    left = float(np.sum((p.fields * mass) * (setup.params.M_u * hdir)))
    right = float(np.sum((v * mass) * chi.fields))
    return abs(left - right)


class ZetaPair(NamedTuple):
    """The limiting-multiplier functional computed two ways per step.

    curvature[i-1] pairs as h sum_e f''(Dw_i) (Dp_i)_e (Dphi)_e
    + (K'(w_i) p_i, phi)_X; defect[i-1] moves every other term of the
    adjoint equation to the right side instead.  Given the discrete
    adjoint equation the two coincide up to rounding.
    """

    curvature: List[DualField]
    defect: List[DualField]


def compute_zeta(setup: ModelSetup, traj: StateTrajectory,
                 p: SensitivityTrajectory) -> ZetaPair:
    """Both forms of zeta_i for an adjoint solved with the cost forcing."""
    grid = setup.grid
    mass = grid.mass
    nu2 = setup.params.nu ** 2
    curvature = []
    defect = []
    for i in range(1, setup.n + 1):
        w_i = traj.w[i]
        p_i = p.fields[i - 1]
        p_next = p.fields[i] if i < setup.n else np.zeros(grid.n_nodes)
        dw = forward_diff(grid, w_i)
        dp = forward_diff(grid, p_i)
        fpp = physics.f_second(setup.flux, dw)
        kp = physics.k_prime(setup.constraint, w_i)
        coeff_a = -mass * neumann_divergence(grid, fpp * dp) + mass * kp * p_i
        v_i = setup.params.M_w * (w_i - setup.w_ad[i - 1])
        coeff_b = mass * (v_i - (p_i - p_next) / setup.tau
                          - physics.g_prime(setup.reaction, w_i) * p_i
                          + nu2 * neumann_divergence(grid, dp))
        curvature.append(DualField(coeffs=coeff_a))
        defect.append(DualField(coeffs=coeff_b))
    return ZetaPair(curvature=curvature, defect=defect)


def zeta_agreement(pair: ZetaPair) -> float:
    """Worst per-step relative discrepancy between the two zeta forms."""
    worst = 0.0
    for za, zb in zip(pair.curvature, pair.defect):
        scale = 1.0 + float(np.max(np.abs(za.coeffs)))
        worst = max(worst, float(np.max(np.abs(za.coeffs - zb.coeffs))) / scale)
    return worst


@dataclass(frozen=True)
class CutoffSpec:
    """Even-order cutoff gamma with gamma(0) = gamma'(0) = 0.

    fn must accept numpy arrays.  The built-in choice is
    gamma0(r) = r^2 / (1 + r^2).
    """

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __post_init__(self):
        v0 = float(self.fn(np.asarray(0.0)))
        # One-sided quotients: a central difference is blind to even kinks
        # such as |r|/(1+|r|), whose one-sided slope at 0 is 1.
        t = 1e-7
        dplus = (float(self.fn(np.asarray(t))) - v0) / t
        dminus = (v0 - float(self.fn(np.asarray(-t)))) / t
        d0 = max(abs(dplus), abs(dminus))
        if abs(v0) > 1e-12 or d0 > 1e-5:
            raise ConfigurationError(
                f"cutoff {self.name!r} must vanish to second order at 0 "
                f"(got gamma(0) = {v0:.2e}, gamma'(0) ~= {d0:.2e})")


def builtin_gamma0() -> CutoffSpec:
    return CutoffSpec(fn=lambda r: r * r / (1.0 + r * r), name="gamma0")


def hinge_cutoff(base: CutoffSpec, rho: float) -> CutoffSpec:
    """gamma_rho(r) = gamma0(r - rho) for r >= rho, gamma0(r + rho) for
    r <= -rho and 0 in between; vanishes on the whole band |r| < rho."""
    if rho < 0:
        raise ConfigurationError("rho must be >= 0")
    if rho == 0:
        return base

    def fn(r):
        r = np.asarray(r, dtype=float)
        return np.where(r >= rho, base.fn(r - rho),
                        np.where(r <= -rho, base.fn(r + rho), 0.0))
    return CutoffSpec(fn=fn, name=f"{base.name}_hinge_{rho:g}")


def gamma_residual(setup: ModelSetup, traj: StateTrajectory,
                   p: SensitivityTrajectory, gamma_spec: CutoffSpec = None,
                   rho: float = 0.0) -> np.ndarray:
    """Cutoff-weighted adjoint defect, nodewise per step.

    Returns gamma(Dw_i) * [ (1/tau)(p_i - p_{i+1}) - nu^2 D2 p_i
    + g'(w_i) p_i - M_w (w_i - w_i^ad) ] with gamma evaluated on edges
    and averaged to nodes; D2 uses the zero-flux ghost convention.  The
    result vanishes identically wherever w_i is spatially constant.
    """
    spec = hinge_cutoff(gamma_spec or builtin_gamma0(), rho)
    grid = setup.grid
    nu2 = setup.params.nu ** 2
    out = np.empty((setup.n, grid.n_nodes))
    for i in range(1, setup.n + 1):
        w_i = traj.w[i]
        p_i = p.fields[i - 1]
        p_next = p.fields[i] if i < setup.n else np.zeros(grid.n_nodes)
        gamma_nodes = average_edges_to_nodes(
            grid, np.asarray(spec.fn(forward_diff(grid, w_i)), dtype=float))
        d2p = neumann_divergence(grid, forward_diff(grid, p_i))
        defect = ((p_i - p_next) / setup.tau - nu2 * d2p
                  + physics.g_prime(setup.reaction, w_i) * p_i
                  - setup.params.M_w * (w_i - setup.w_ad[i - 1]))
        out[i - 1] = gamma_nodes * defect
    return out


def refined_gamma_residual(setup: ModelSetup, traj: StateTrajectory,
                           p: SensitivityTrajectory,
                           gamma_spec: CutoffSpec = None) -> np.ndarray:
    """Variant keeping the curvature flux inside the defect.

    Subtracts the full divergence of (f'' + nu^2) Dp instead of the
    nu^2 part alone; by the adjoint equation this leaves only the
    constraint contribution, so it is reported as a cross-check, never
    asserted against.
    """
    spec = gamma_spec or builtin_gamma0()
    grid = setup.grid
    nu2 = setup.params.nu ** 2
    out = np.empty((setup.n, grid.n_nodes))
    for i in range(1, setup.n + 1):
        w_i = traj.w[i]
        p_i = p.fields[i - 1]
        p_next = p.fields[i] if i < setup.n else np.zeros(grid.n_nodes)
        dw = forward_diff(grid, w_i)
        dp = forward_diff(grid, p_i)
        gamma_nodes = average_edges_to_nodes(
            grid, np.asarray(spec.fn(dw), dtype=float))
        flux_div = neumann_divergence(
            grid, (physics.f_second(setup.flux, dw) + nu2) * dp)
        defect = ((p_i - p_next) / setup.tau - flux_div
                  + physics.g_prime(setup.reaction, w_i) * p_i
                  - setup.params.M_w * (w_i - setup.w_ad[i - 1]))
        out[i - 1] = gamma_nodes * defect
    return out


def nodal_gradient_abs(setup_or_grid, w: np.ndarray) -> np.ndarray:
    """|Dw| averaged from edges to nodes (zero ghosts at the boundary)."""
    grid = getattr(setup_or_grid, "grid", setup_or_grid)
    return average_edges_to_nodes(grid, np.abs(forward_diff(grid, w)))

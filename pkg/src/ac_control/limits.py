"""Regularization continuation: states and optimal controls as (eps, delta) shrink.

Limits are reached only by marching a schedule of strictly positive
(eps_m, delta_m) pairs toward zero, warm-starting each row from the
previous one; no nonsmooth solve is ever attempted.  The tables report
successive-difference norms (Cauchy surrogates for convergence), the
constraint overshoot (|w|-1)_+, and, for control runs, the
limiting-optimality diagnostics: stationarity residuals, the fraction of
the multiplier's nodal mass carried by the region where Dw stays away
from zero, and cutoff-localized adjoint residuals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import dataclasses

from . import control, physics, sensitivity
from .errors import ConfigurationError, SolverError
from .mesh import (FieldNorms, field_norms, forward_diff,
                   neumann_divergence, trajectory_inner, trajectory_norm)
from .state import (ModelSetup, StateTrajectory, StepOptions, residual_floor,
                    solve_state)

_SCHEDULE_FLOOR = 2.0 ** -12


def _row_step_options(setup_m: ModelSetup,
                      opts: Optional[StepOptions]) -> StepOptions:
    """Newton options with the tolerance lifted to the attainable floor.

    As eps shrinks, f''(0) ~ 1/eps amplifies rounding in the strong-form
    residual; a fixed tight tolerance would turn that floating-point
    floor into a spurious nonconvergence error at the sharp end of the
    schedule.
    """
    opts = opts or StepOptions()
    floor = residual_floor(setup_m)
    if floor > opts.newton_tol:
        opts = dataclasses.replace(opts, newton_tol=floor)
    return opts


@dataclass(frozen=True)
class Schedule:
    """Strictly positive, non-increasing (eps_m, delta_m) pairs."""

    pairs: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if len(self.pairs) < 1:
            raise ConfigurationError("schedule needs at least one row")
        last = (np.inf, np.inf)
        for m, (eps, delta) in enumerate(self.pairs, start=1):
            if not (eps > 0 and delta > 0):
                raise ConfigurationError(
                    f"schedule row {m}: entries must be positive")
            if eps > last[0] or delta > last[1]:
                raise ConfigurationError(
                    f"schedule row {m}: entries must be non-increasing")
            last = (eps, delta)
        if last[0] < _SCHEDULE_FLOOR or last[1] < _SCHEDULE_FLOOR:
            raise ConfigurationError(
                f"schedule tail below solver floor 2^-12 = {_SCHEDULE_FLOOR:g}")

    def __len__(self):
        return len(self.pairs)


def default_schedule(M: int, eps_floor: float = _SCHEDULE_FLOOR,
                     delta_floor: float = _SCHEDULE_FLOOR) -> Schedule:
    """Geometric halving eps_m = delta_m = 2^-m, m = 1..M, clipped at floors."""
    if M < 2:
        raise ConfigurationError("continuation needs M >= 2 rows")
    pairs = tuple((max(2.0 ** -m, eps_floor), max(2.0 ** -m, delta_floor))
                  for m in range(1, M + 1))
    return Schedule(pairs=pairs)


def trajectory_diff_norms(setup: ModelSetup, wa: np.ndarray,
                          wb: np.ndarray) -> FieldNorms:
    """Norms of wa - wb over all stored steps: stacked L2/H1, sup C0/C1."""
    grid = setup.grid
    l2sq = h1sq = 0.0
    c0 = c1 = 0.0
    for i in range(wa.shape[0]):
        nm = field_norms(grid, wa[i] - wb[i])
        l2sq += nm.L2 ** 2
        h1sq += nm.H1 ** 2
        c0 = max(c0, nm.C0)
        c1 = max(c1, nm.C1)
    return FieldNorms(L2=float(np.sqrt(l2sq)), H1=float(np.sqrt(h1sq)),
                      C0=c0, C1=c1)


def max_overshoot(traj: StateTrajectory) -> float:
    """max over solved steps and nodes of (|w| - 1)_+."""
    if traj.setup.n == 0:
        return 0.0
    return float(np.max(np.maximum(np.abs(traj.w[1:]) - 1.0, 0.0)))


def decrease_count(values: Sequence[float]) -> Tuple[int, int]:
    """(number of strict decreases, number of adjacent pairs)."""
    pairs = len(values) - 1
    dec = sum(1 for a, b in zip(values, values[1:]) if b < a)
    return dec, max(pairs, 0)


@dataclass
class StateRow:
    m: int
    eps: float
    delta: float
    cost: float
    overshoot: float
    diffs: Optional[FieldNorms] = None      # against the previous row


@dataclass
class StateContinuationResult:
    rows: List[StateRow]
    trajectories: List[StateTrajectory]
    schedule: Schedule

    def diff_series(self, mode: str = "C1") -> List[float]:
        return [getattr(r.diffs, mode) for r in self.rows if r.diffs is not None]


def run_state_continuation(setup_base: ModelSetup, u: np.ndarray,
                           schedule: Schedule,
                           opts: Optional[StepOptions] = None,
                           keep_trajectories: bool = True
                           ) -> StateContinuationResult:
    """Solve the state along the schedule for fixed u, warm-starting each row.

    Requires |w0| <= 1 nodewise so the constraint energy of the initial
    datum stays zero uniformly along the schedule.
    """
    if float(np.max(np.abs(setup_base.w0))) > 1.0 + 1e-14:
        raise ConfigurationError(
            "continuation needs |w0| <= 1 nodewise so the constraint energy "
            "of the initial datum is bounded uniformly in delta")
    rows: List[StateRow] = []
    trajs: List[StateTrajectory] = []
    prev_traj = None
    for m, (eps, delta) in enumerate(schedule.pairs, start=1):
        setup_m = setup_base.with_regularization(eps, delta)
        try:
            traj = solve_state(setup_m, u, _row_step_options(setup_m, opts),
                               warm_start=prev_traj)
        except SolverError as exc:
            raise SolverError(f"continuation row m={m} (eps={eps:g}, "
                              f"delta={delta:g}): {exc}") from exc
        row = StateRow(m=m, eps=eps, delta=delta,
                       cost=control.cost(setup_m, traj, u),
                       overshoot=max_overshoot(traj))
        if prev_traj is not None:
            row.diffs = trajectory_diff_norms(setup_m, prev_traj.w, traj.w)
        rows.append(row)
        if keep_trajectories:
            trajs.append(traj)
        prev_traj = traj
    if not keep_trajectories and prev_traj is not None:
        trajs.append(prev_traj)
    return StateContinuationResult(rows=rows, trajectories=trajs,
                                   schedule=schedule)


def neumann_test_fields(setup: ModelSetup, count: int = 10) -> np.ndarray:
    """First `count` cosine modes cos(k pi (x+L) / 2L), flux-free at both ends."""
    grid = setup.grid
    modes = np.empty((count, grid.n_nodes))
    for k in range(count):
        modes[k] = np.cos(k * np.pi * (grid.x + grid.L) / (2 * grid.L))
    return modes


def pairings(setup: ModelSetup, u: np.ndarray, modes: np.ndarray) -> np.ndarray:
    """Mass-weighted pairings of the control with time-constant test fields."""
    vals = np.empty(modes.shape[0])
    for k in range(modes.shape[0]):
        phi = np.broadcast_to(modes[k], u.shape)
        vals[k] = trajectory_inner(setup.grid, u, phi)
    return vals


@dataclass
class ControlRow:
    m: int
    eps: float
    delta: float
    cost: float
    stationarity: float
    status: str
    overshoot: float
    u: np.ndarray
    traj: StateTrajectory
    adjoint: sensitivity.SensitivityTrajectory
    pairing_values: np.ndarray
    diffs: Optional[FieldNorms] = None      # optimal-state diff vs previous row
    control_diff: float = 0.0               # |u_m - u_{m-1}|_X
    pairing_diff: float = 0.0               # max_k pairing change vs previous


@dataclass
class ControlContinuationResult:
    rows: List[ControlRow]
    schedule: Schedule
    setup_base: ModelSetup

    def pairing_diff_series(self) -> List[float]:
        return [r.pairing_diff for r in self.rows[1:]]


def run_control_continuation(setup_base: ModelSetup, schedule: Schedule,
                             opt_opts: Optional[control.OptimizeOptions] = None,
                             u0: Optional[np.ndarray] = None,
                             n_test_fields: int = 10
                             ) -> ControlContinuationResult:
    """Optimize at each schedule row, warm-starting u from the previous optimum.

    A stalled line search flags the row and the run continues with its
    best iterate; weak-convergence bookkeeping pairs each optimum
    against fixed Neumann-compatible cosine modes.
    """
    opt_opts = opt_opts or control.OptimizeOptions()
    if setup_base.params.M_u <= 0:
        raise ConfigurationError("control continuation needs M_u > 0")
    modes = neumann_test_fields(setup_base, n_test_fields)
    rows: List[ControlRow] = []
    u_warm = u0
    for m, (eps, delta) in enumerate(schedule.pairs, start=1):
        setup_m = setup_base.with_regularization(eps, delta)
        row_opts = dataclasses.replace(
            opt_opts, step_opts=_row_step_options(setup_m, opt_opts.step_opts))
        try:
            result = control.optimize(setup_m, u_warm, row_opts)
        except SolverError as exc:
            raise SolverError(f"continuation row m={m} (eps={eps:g}, "
                              f"delta={delta:g}): {exc}") from exc
        row = ControlRow(m=m, eps=eps, delta=delta, cost=result.cost,
                         stationarity=result.grad_norm, status=result.status,
                         overshoot=max_overshoot(result.state), u=result.u,
                         traj=result.state, adjoint=result.adjoint,
                         pairing_values=pairings(setup_m, result.u, modes))
        if rows:
            prev = rows[-1]
            row.diffs = trajectory_diff_norms(setup_m, prev.traj.w,
                                              row.traj.w)
            row.control_diff = trajectory_norm(setup_m.grid, row.u - prev.u)
            row.pairing_diff = float(np.max(np.abs(
                row.pairing_values - prev.pairing_values)))
        rows.append(row)
        u_warm = result.u
    return ControlContinuationResult(rows=rows, schedule=schedule,
                                     setup_base=setup_base)


@dataclass
class LimitRow:
    m: int
    eps: float
    delta: float
    stationarity: float
    zeta_total_mass: float
    zeta_frac: Dict[float, float]           # rho -> mass fraction on |Dw| >= rho
    gamma0_norm: float
    gamma_rho_norm: Dict[float, float]
    recon_err_defect: Dict[float, float]    # rho -> max defect-form mismatch
    recon_err_curvature: Dict[float, float]
    zeta_agreement: float
    refined_norm: float                     # reported only, never asserted


@dataclass
class LimitReport:
    rows: List[LimitRow]
    rho_list: Tuple[float, ...]

    def zeta_frac_series(self, rho: float) -> List[float]:
        return [r.zeta_frac[rho] for r in self.rows]

    def gamma0_series(self) -> List[float]:
        return [r.gamma0_norm for r in self.rows]


def _stacked_norm(setup: ModelSetup, fields: np.ndarray) -> float:
    return trajectory_norm(setup.grid, fields)


def limit_diagnostics(setup_base: ModelSetup,
                      schedule_result: ControlContinuationResult,
                      rho_list: Sequence[float] = (0.5, 0.1, 0.01)
                      ) -> LimitReport:
    """Per-row limiting-optimality diagnostics from a control continuation.

    For each row: the stationarity residual; for each rho the fraction
    of total nodal multiplier mass sum_ij |zeta_ij| sitting where the
    node-averaged |Dw_i| >= rho; L2 norms of the cutoff residual with
    the plain cutoff and with the rho-hinged one; and the reconstruction
    mismatch of the multiplier coefficients against the adjoint defect
    field on those same nodes (both forms, reported).
    """
    rho_list = tuple(rho_list)
    rows: List[LimitRow] = []
    for row in schedule_result.rows:
        setup_m = setup_base.with_regularization(row.eps, row.delta)
        grid = setup_m.grid
        traj, p = row.traj, row.adjoint
        pair = sensitivity.compute_zeta(setup_m, traj, p)
        agreement = sensitivity.zeta_agreement(pair)

        abs_coeffs = np.stack([np.abs(z.coeffs) for z in pair.curvature])
        total = float(np.sum(abs_coeffs))
        dw_nodes = np.stack([
            sensitivity.nodal_gradient_abs(grid, traj.w[i])
            for i in range(1, setup_m.n + 1)])
        frac = {}
        for rho in rho_list:
            mask = dw_nodes >= rho
            frac[rho] = float(np.sum(abs_coeffs[mask]) / total) if total > 0 else 0.0

        res0 = sensitivity.gamma_residual(setup_m, traj, p)
        gamma0_norm = _stacked_norm(setup_m, res0)
        gamma_rho_norm = {}
        for rho in rho_list:
            res_r = sensitivity.gamma_residual(setup_m, traj, p, rho=rho)
            gamma_rho_norm[rho] = _stacked_norm(setup_m, res_r)

        # Reconstruction of the multiplier from resolved adjoint terms on
        # nodes where Dw stays away from zero.
        recon_b: Dict[float, float] = {rho: 0.0 for rho in rho_list}
        recon_a: Dict[float, float] = {rho: 0.0 for rho in rho_list}
        nu2 = setup_m.params.nu ** 2
        for i in range(1, setup_m.n + 1):
            p_i = p.fields[i - 1]
            p_next = (p.fields[i] if i < setup_m.n
                      else np.zeros(grid.n_nodes))
            d2p = neumann_divergence(grid, forward_diff(grid, p_i))
            target = (setup_m.params.M_w * (traj.w[i] - setup_m.w_ad[i - 1])
                      - (p_i - p_next) / setup_m.tau + nu2 * d2p
                      - physics.g_prime(setup_m.reaction, traj.w[i]) * p_i)
            for rho in rho_list:
                mask = dw_nodes[i - 1] >= rho
                if not np.any(mask):
                    continue
                cb = pair.defect[i - 1].coeffs / grid.mass
                ca = pair.curvature[i - 1].coeffs / grid.mass
                recon_b[rho] = max(recon_b[rho],
                                   float(np.max(np.abs((cb - target)[mask]))))
                recon_a[rho] = max(recon_a[rho],
                                   float(np.max(np.abs((ca - target)[mask]))))

        refined = sensitivity.refined_gamma_residual(setup_m, traj, p)
        rows.append(LimitRow(
            m=row.m, eps=row.eps, delta=row.delta,
            stationarity=control.stationarity_residual(setup_m, row.u,
                                                       p.fields),
            zeta_total_mass=total, zeta_frac=frac,
            gamma0_norm=gamma0_norm, gamma_rho_norm=gamma_rho_norm,
            recon_err_defect=recon_b, recon_err_curvature=recon_a,
            zeta_agreement=agreement,
            refined_norm=_stacked_norm(setup_m, refined)))
    return LimitReport(rows=rows, rho_list=rho_list)

"""Forward solver for the time-discrete constrained Allen-Cahn system.

Each implicit Euler step solves

    (1/tau)(w_i - w_{i-1}) - d/dx( f'(dw_i/dx) + nu^2 dw_i/dx )
        + K(w_i) + g(w_i) = M_u u_i,      dw_i/dx(+-L) = 0,

by minimizing the strictly convex per-step energy

    G(w) = (1/2 tau)|w - w_{i-1}|_X^2 + Phi(w) + Khat(w) + int G(w)
           - (M_u u_i, w)_X,
    Phi(w) = h * sum_e [ f(s_e) + (nu^2/2) s_e^2 ],  s = forward_diff(w),

with damped Newton (Armijo backtracking on G, gradient-step fallback).
Strict convexity holds under the step-size ceiling tau < 1/(8 (C_g + 1)).

The free energy Phi + Khat + int G acts as a Lyapunov functional: the
solver records a per-step ledger certifying

    (1/2 tau)|w_i - w_{i-1}|_X^2 + F(w_i) - F(w_{i-1}) <= tau M_u^2 |u_i|_X^2

up to the Newton tolerance.  A companion diagnostic bounds the constraint
force xi_i = K(w_i) in terms of the data (in two variants of the forcing
constant, 2 M_u and 2 M_u^2, whose margins are both reported).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import NamedTuple, Optional

import numpy as np

from . import physics
from .errors import ConfigurationError, ConstraintKindError, StepNonconvergenceError
from .mesh import (Grid, TridiagonalSystem, assemble_tridiagonal, forward_diff,
                   inner_product, neumann_divergence, solve_tridiagonal, x_norm)
from .physics import (ConstraintRegularization, FluxRegularization,
                      PhysicsParams, Reaction)


@dataclass
class ModelSetup:
    """One fully specified problem instance.

    Construction checks shapes and finiteness only; the structural
    assumptions A1..A6 are checked by `physics.validate_assumptions`, and
    solvers refuse to run until `ensure_valid` passes.  This split lets a
    deliberately broken setup (nu = 0, tau too large, ...) exist long
    enough for the validator to report on it.
    """

    grid: Grid
    params: PhysicsParams
    flux: FluxRegularization
    constraint: ConstraintRegularization
    reaction: Reaction
    T: float
    n: int
    w0: np.ndarray
    w_ad: np.ndarray
    tau: float = dc_field(init=False)
    _report: Optional[physics.ValidationReport] = dc_field(
        default=None, init=False, repr=False)

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise ConfigurationError(f"horizon T must be positive, got {self.T}")
        if int(self.n) != self.n or self.n < 0:
            raise ConfigurationError(f"step count n must be an integer >= 0, got {self.n}")
        self.n = int(self.n)
        self.tau = self.T / self.n if self.n > 0 else 0.0
        self.w0 = np.asarray(self.w0, dtype=float)
        if self.w0.shape != (self.grid.n_nodes,):
            raise ConfigurationError(
                f"w0 has shape {self.w0.shape}, expected ({self.grid.n_nodes},)")
        self.w_ad = np.asarray(self.w_ad, dtype=float)
        if self.w_ad.shape != (self.n, self.grid.n_nodes):
            raise ConfigurationError(
                f"w_ad has shape {self.w_ad.shape}, expected "
                f"({self.n}, {self.grid.n_nodes})")

    def ensure_valid(self) -> physics.ValidationReport:
        """Validate once and cache; raises AssumptionError on failure."""
        if self._report is None or not self._report.ok:
            self._report = physics.require_valid(self)
        return self._report

    def with_regularization(self, eps: float, delta: float) -> "ModelSetup":
        """Same problem at other regularization levels.

        Nonsmooth limit labels map to their solvable stand-ins: an abs
        flux becomes hyperbola, a hard constraint becomes c1_piecewise.
        """
        f_kind = "hyperbola" if self.flux.kind == "abs" else self.flux.kind
        k_kind = "c1_piecewise" if self.constraint.kind == "hard" else self.constraint.kind
        return ModelSetup(
            grid=self.grid, params=self.params,
            flux=FluxRegularization(f_kind, eps),
            constraint=ConstraintRegularization(k_kind, delta),
            reaction=self.reaction, T=self.T, n=self.n,
            w0=self.w0, w_ad=self.w_ad)

    def zero_control(self) -> np.ndarray:
        return np.zeros((self.n, self.grid.n_nodes))


@dataclass(frozen=True)
class StepOptions:
    """Newton controls for one implicit step."""

    newton_tol: float = 1e-11
    max_newton: int = 50
    armijo_slope: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-12

    def __post_init__(self):
        if min(self.newton_tol, self.armijo_slope, self.min_step) <= 0:
            raise ConfigurationError("step options must be positive")
        if self.max_newton < 1:
            raise ConfigurationError("max_newton must be >= 1")
        if not 0.0 < self.backtrack < 1.0:
            raise ConfigurationError("backtrack factor must lie in (0, 1)")


class StepDiagnostics(NamedTuple):
    iterations: int
    residual_norms: list
    energy: float
    backtracks: int
    fallback_steps: int


@dataclass
class StateTrajectory:
    """Solved trajectory w_0..w_n with fluxes and constraint forces.

    flux_edges[i-1] holds f'(Dw_i) on edges, xi[i-1] holds K(w_i) on
    nodes, for steps i = 1..n.
    """

    setup: ModelSetup
    w: np.ndarray
    flux_edges: np.ndarray
    xi: np.ndarray
    diagnostics: list


def _check_control(setup: ModelSetup, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (setup.n, setup.grid.n_nodes):
        raise ConfigurationError(
            f"control has shape {u.shape}, expected "
            f"({setup.n}, {setup.grid.n_nodes})")
    return u


def _phi(setup: ModelSetup, w: np.ndarray) -> float:
    """Discrete gradient energy h * sum_e [f(s) + (nu^2/2) s^2]."""
    s = forward_diff(setup.grid, w)
    nu2 = setup.params.nu ** 2
    return setup.grid.h * float(
        np.sum(physics.f_eval(setup.flux, s) + 0.5 * nu2 * s * s))


def free_energy(setup: ModelSetup, w: np.ndarray) -> float:
    """F(w) = Phi(w) + Khat(w) + int G(w); +inf on hard-kind violation."""
    mass = setup.grid.mass
    khat = float(np.sum(mass * physics.khat_eval(setup.constraint, w)))
    bulk = float(np.sum(mass * physics.G_eval(setup.reaction, w)))
    return _phi(setup, w) + khat + bulk


def step_energy(setup: ModelSetup, w_prev: np.ndarray, u_i: np.ndarray,
                w: np.ndarray) -> float:
    """Per-step objective G(w); strictly convex under the step ceiling."""
    if not setup.constraint.is_pointwise:
        raise ConstraintKindError(
            "per-step energy needs a pointwise constraint kind (delta > 0)")
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(w_prev))
            and np.all(np.isfinite(u_i))):
        raise ConfigurationError("step_energy requires finite inputs")
    grid = setup.grid
    diff = w - w_prev
    kinetic = 0.5 / setup.tau * inner_product(grid, diff, diff)
    forcing = setup.params.M_u * inner_product(grid, u_i, w)
    return kinetic + free_energy(setup, w) - forcing


def step_residual(setup: ModelSetup, w_prev: np.ndarray, u_i: np.ndarray,
                  w: np.ndarray) -> np.ndarray:
    """Nodal residual of the implicit step; M * residual = grad of G."""
    grid = setup.grid
    s = forward_diff(grid, w)
    q = physics.f_prime(setup.flux, s) + setup.params.nu ** 2 * s
    out = (w - w_prev) / setup.tau
    out -= neumann_divergence(grid, q)
    out += physics.k_eval(setup.constraint, w)
    out += physics.g_eval(setup.reaction, w)
    out -= setup.params.M_u * u_i
    return out


def step_system(setup: ModelSetup, w: np.ndarray) -> TridiagonalSystem:
    """SPD tridiagonal (1/tau) M + S(f''(Dw) + nu^2) + M diag(K'(w) + g'(w)).

    This matrix is both the Newton Hessian of the per-step energy and the
    per-step operator of the linearization and adjoint systems.
    """
    grid = setup.grid
    s = forward_diff(grid, w)
    edge = physics.f_second(setup.flux, s) + setup.params.nu ** 2
    node = (1.0 / setup.tau
            + physics.k_prime(setup.constraint, w)
            + physics.g_prime(setup.reaction, w))
    return assemble_tridiagonal(grid, edge, node)


def residual_floor(setup: ModelSetup) -> float:
    """Attainable strong-form residual scale in double precision.

    The dominant rounding amplification in step_residual is the flux
    difference: an O(eps |w| / h) error in each forward difference is
    scaled by f''(0) + nu^2 and divided by h again, so residual norms
    below roughly eps * 2 (f''(0) + nu^2) / h^2 cannot be reached no
    matter how many Newton iterations run.  Continuation drivers lift
    their per-row Newton tolerance to this value (it grows like 1/eps as
    the flux regularization sharpens).
    """
    grid = setup.grid
    if not setup.flux.is_smooth:
        return np.inf
    curvature0 = float(physics.f_second(setup.flux, 0.0))
    w_scale = max(1.0, float(np.max(np.abs(setup.w0))),
                  float(np.max(np.abs(setup.w_ad))) if setup.n else 0.0)
    per_node = (np.finfo(float).eps * 2.0
                * (curvature0 + setup.params.nu ** 2) / grid.h ** 2 * w_scale)
    return float(per_node * np.sqrt(2.0 * grid.L))


def _exact_line_search(energy, alpha_hint: float = 1.0) -> float:
    """Golden-section minimizer of a convex 1D energy restriction."""
    lo, hi = 0.0, alpha_hint
    e_hi = energy(hi)
    for _ in range(60):
        e_next = energy(2.0 * hi)
        if e_next >= e_hi:
            hi = 2.0 * hi
            break
        hi *= 2.0
        e_hi = e_next
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    ec, ed = energy(c), energy(d)
    for _ in range(120):
        if ec <= ed:
            b, d, ed = d, c, ec
            c = b - invphi * (b - a)
            ec = energy(c)
        else:
            a, c, ec = c, d, ed
            d = a + invphi * (b - a)
            ed = energy(d)
        if b - a <= 1e-14 * (1.0 + b):
            break
    return 0.5 * (a + b)


def solve_step(setup: ModelSetup, w_prev: np.ndarray, u_i: np.ndarray,
               opts: StepOptions = None, w_start: np.ndarray = None,
               step_index: int = 0):
    """Damped Newton on the per-step energy; returns (w, diagnostics).

    The Newton direction always exists (the Hessian is SPD under the
    step ceiling); if Armijo backtracking stalls, one gradient step with
    an exact line search restores guaranteed descent.
    """
    opts = opts or StepOptions()
    grid = setup.grid
    scale = 1.0 + x_norm(grid, u_i)
    w = np.array(w_prev if w_start is None else w_start, dtype=float)
    res_hist = []
    backtracks = 0
    fallbacks = 0
    for it in range(opts.max_newton + 1):
        r = step_residual(setup, w_prev, u_i, w)
        rn = x_norm(grid, r)
        res_hist.append(rn)
        if rn <= opts.newton_tol * scale:
            return w, StepDiagnostics(
                iterations=it, residual_norms=res_hist,
                energy=step_energy(setup, w_prev, u_i, w),
                backtracks=backtracks, fallback_steps=fallbacks)
        if it == opts.max_newton:
            break
        grad = grid.mass * r
        direction = solve_tridiagonal(step_system(setup, w), -grad)
        slope = float(np.dot(grad, direction))
        if not np.isfinite(slope) or slope >= 0.0:
            direction = -r
            slope = -float(np.dot(grad, r))
        e0 = step_energy(setup, w_prev, u_i, w)
        # absolute slack 1e-14*(1+|e0|) absorbs rounding when the Newton
        # decrement falls below the resolution of the energy itself
        slack = 1e-14 * (1.0 + abs(e0))
        alpha = 1.0
        accepted = False
        while alpha >= opts.min_step:
            trial = w + alpha * direction
            if step_energy(setup, w_prev, u_i, trial) <= \
                    e0 + opts.armijo_slope * alpha * slope + slack:
                w = trial
                accepted = True
                break
            alpha *= opts.backtrack
            backtracks += 1
        if not accepted:
            fallbacks += 1
            desc = -r

            def restricted(alpha_val):
                return step_energy(setup, w_prev, u_i, w + alpha_val * desc)
            alpha = _exact_line_search(restricted, alpha_hint=setup.tau)
            w = w + alpha * desc
    raise StepNonconvergenceError(
        f"step {step_index}: Newton did not reach tol {opts.newton_tol:g} "
        f"within {opts.max_newton} iterations (last residual {res_hist[-1]:.3e})",
        step_index=step_index, last_iterate=w, residual_history=res_hist)


def solve_state(setup: ModelSetup, u: np.ndarray, opts: StepOptions = None,
                warm_start: StateTrajectory = None) -> StateTrajectory:
    """March the implicit scheme i = 1..n from w0.

    warm_start supplies initial Newton iterates per step (used by the
    continuation driver); otherwise each step starts from its
    predecessor.
    """
    setup.ensure_valid()
    u = _check_control(setup, u)
    opts = opts or StepOptions()
    grid = setup.grid
    w_all = np.empty((setup.n + 1, grid.n_nodes))
    w_all[0] = setup.w0
    flux_edges = np.empty((setup.n, grid.J))
    xi = np.empty((setup.n, grid.n_nodes))
    diags = []
    for i in range(1, setup.n + 1):
        start = None
        if warm_start is not None and warm_start.w.shape == w_all.shape:
            start = warm_start.w[i]
        w_i, diag = solve_step(setup, w_all[i - 1], u[i - 1], opts,
                               w_start=start, step_index=i)
        w_all[i] = w_i
        flux_edges[i - 1] = physics.f_prime(setup.flux, forward_diff(grid, w_i))
        xi[i - 1] = physics.k_eval(setup.constraint, w_i)
        diags.append(diag)
    return StateTrajectory(setup=setup, w=w_all, flux_edges=flux_edges,
                           xi=xi, diagnostics=diags)


class LedgerRow(NamedTuple):
    i: int
    kinetic: float
    free_energy: float
    rhs: float
    slack: float
    passed: bool


@dataclass(frozen=True)
class LedgerReport:
    rows: tuple
    passed: bool
    free_energy_initial: float


def energy_ledger_check(setup: ModelSetup, traj: StateTrajectory,
                        u: np.ndarray, rel_tol: float = 1e-9) -> LedgerReport:
    """Per-step energy inequality audit.

    slack_i = tau M_u^2 |u_i|^2 - [ (1/2 tau)|w_i - w_{i-1}|^2
              + F(w_i) - F(w_{i-1}) ] must stay >= -rel_tol*(1+|F(w_{i-1})|).
    """
    u = _check_control(setup, u)
    grid = setup.grid
    mu2 = setup.params.M_u ** 2
    rows = []
    all_pass = True
    f_prev = free_energy(setup, traj.w[0])
    f_initial = f_prev
    for i in range(1, setup.n + 1):
        diff = traj.w[i] - traj.w[i - 1]
        kinetic = 0.5 / setup.tau * inner_product(grid, diff, diff)
        f_cur = free_energy(setup, traj.w[i])
        rhs = setup.tau * mu2 * inner_product(grid, u[i - 1], u[i - 1])
        slack = rhs - (kinetic + f_cur - f_prev)
        ok = bool(slack >= -rel_tol * (1.0 + abs(f_prev)))
        all_pass = all_pass and ok
        rows.append(LedgerRow(i=i, kinetic=kinetic, free_energy=f_cur,
                              rhs=rhs, slack=slack, passed=ok))
        f_prev = f_cur
    return LedgerReport(rows=tuple(rows), passed=all_pass,
                        free_energy_initial=f_initial)


class XiBoundRow(NamedTuple):
    i: int
    lhs: float
    rhs_linear: float
    rhs_squared: float
    slack_linear: float
    slack_squared: float


@dataclass(frozen=True)
class XiBoundReport:
    rows: tuple
    holds_linear: bool
    holds_squared: bool


def xi_bound_check(setup: ModelSetup, traj: StateTrajectory,
                   u: np.ndarray) -> XiBoundReport:
    """Constraint-force bound audit, both forcing-constant variants.

    Checks (1/4)|xi_i|^2 <= (1/tau^2)|w_i - w_{i-1}|^2 + C_g^2 |w_i|^2
    + 2|g(0)|^2 + 2 M_u^p |u_i|^2 for p = 1 (linear) and p = 2 (squared);
    the Young-inequality derivation supports p = 2, and the two coincide
    at M_u = 1.
    """
    if not setup.constraint.is_pointwise:
        raise ConstraintKindError("xi bound needs a pointwise constraint kind")
    u = _check_control(setup, u)
    grid = setup.grid
    cg = setup.reaction.C_g
    g0 = physics.g_eval(setup.reaction, 0.0)
    g0_sq = g0 * g0 * 2.0 * grid.L
    mu = setup.params.M_u
    rows = []
    ok_lin = ok_sq = True
    for i in range(1, setup.n + 1):
        xi_i = traj.xi[i - 1]
        lhs = 0.25 * inner_product(grid, xi_i, xi_i)
        diff = traj.w[i] - traj.w[i - 1]
        base = (inner_product(grid, diff, diff) / setup.tau ** 2
                + cg * cg * inner_product(grid, traj.w[i], traj.w[i])
                + 2.0 * g0_sq)
        u_sq = inner_product(grid, u[i - 1], u[i - 1])
        rhs_lin = base + 2.0 * mu * u_sq
        rhs_sq = base + 2.0 * mu * mu * u_sq
        rows.append(XiBoundRow(
            i=i, lhs=lhs, rhs_linear=rhs_lin, rhs_squared=rhs_sq,
            slack_linear=rhs_lin - lhs, slack_squared=rhs_sq - lhs))
        ok_lin = ok_lin and lhs <= rhs_lin + 1e-12 * (1.0 + rhs_lin)
        ok_sq = ok_sq and lhs <= rhs_sq + 1e-12 * (1.0 + rhs_sq)
    return XiBoundReport(rows=tuple(rows), holds_linear=ok_lin,
                         holds_squared=ok_sq)

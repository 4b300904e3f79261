"""Regularization families, reaction term, resolvent, and assumption checks.

The flux regularizations f are smooth convex approximations of |r| used to
tame the singular diffusion term; the constraint regularizations K are
single-valued surrogates for the subdifferential of the indicator of
[-1, 1], vanishing inside and with slope at most 1/delta outside.  The
reaction g is a cubic with nonnegative leading coefficient, which keeps
its semi-monotonicity constant C_g and the nonnegative primitive G in
closed form.

Structural assumptions are validated by `validate_assumptions`, which
reports rather than raises; solvers call `require_valid` and refuse to
run on a failed report.  Identifiers A1..A6 name the individual checks:

    A1 positive diffusion (nu > 0)
    A2 flux family smooth, convex, of linear growth, with vanishing
       curvature away from the origin as epsilon shrinks
    A3 semi-monotone reaction with nonnegative primitive
    A4 constraint family inactive on [-1, 1] with bounded slope
    A5 time-step ceiling tau < 1/(8 (C_g + 1))
    A6 target trajectory present and finite
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .errors import (AssumptionError, ConfigurationError, ConstraintKindError,
                     NondifferentiableError)

Scalar = Union[float, np.ndarray]

FLUX_KINDS = ("abs", "hyperbola", "tanh_log", "arctan")
CONSTRAINT_KINDS = ("c1_piecewise", "yosida", "hard")


def _eval(r, fn_scalar_free):
    """Apply an array formula, returning a float for scalar input."""
    arr = np.asarray(r, dtype=float)
    out = fn_scalar_free(arr)
    if arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class FluxRegularization:
    """Convex approximation family of |r| with parameter epsilon.

    Kinds: `hyperbola` sqrt(r^2 + eps^2) - eps, `tanh_log`
    eps*log(cosh(r/eps)), `arctan` (2 eps/pi)(t*arctan t - log(1+t^2)/2)
    with t = r/eps, and the nonsmooth limit label `abs` (epsilon = 0).
    All built-in kinds have |f'| <= 1, so the growth constant C0 is 1.
    """

    kind: str
    epsilon: float = 0.0
    C0: float = field(default=1.0, init=False)

    def __post_init__(self):
        if self.kind not in FLUX_KINDS:
            raise ConfigurationError(
                f"unknown flux kind {self.kind!r}; choose from {FLUX_KINDS}")
        # Pointwise evaluation is well defined for any epsilon > 0; the
        # regularization range [0, 1] that solvers rely on is enforced by
        # the A2 check in validate_assumptions, not at construction.
        if not np.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise ConfigurationError(
                f"epsilon must be a finite nonnegative real, got {self.epsilon}")
        if self.kind == "abs" and self.epsilon != 0.0:
            raise ConfigurationError("abs kind requires epsilon = 0")
        if self.kind != "abs" and self.epsilon == 0.0:
            raise ConfigurationError(
                f"{self.kind} kind requires epsilon > 0; the epsilon = 0 "
                "limit is reached by continuation, not direct evaluation")

    @property
    def is_smooth(self) -> bool:
        return self.kind != "abs"


def f_eval(reg: FluxRegularization, r: Scalar) -> Scalar:
    """Evaluate f(r) for the chosen family."""
    eps = reg.epsilon
    if reg.kind == "abs":
        return _eval(r, np.abs)
    if reg.kind == "hyperbola":
        return _eval(r, lambda a: np.hypot(a, eps) - eps)
    if reg.kind == "tanh_log":
        # eps*log(cosh(a/eps)) = |a| - eps*log(2) + eps*log1p(exp(-2|a|/eps))
        return _eval(r, lambda a: np.abs(a) - eps * math.log(2.0)
                     + eps * np.log1p(np.exp(-2.0 * np.abs(a) / eps)))
    t = np.asarray(r, dtype=float) / eps
    out = (2.0 * eps / np.pi) * (t * np.arctan(t) - 0.5 * np.log1p(t * t))
    return float(out) if out.ndim == 0 else out


def f_prime(reg: FluxRegularization, r: Scalar) -> Scalar:
    """Evaluate f'(r); the abs kind has no derivative at r = 0."""
    eps = reg.epsilon
    if reg.kind == "abs":
        arr = np.asarray(r, dtype=float)
        if np.any(arr == 0.0):
            raise NondifferentiableError("|r| has no derivative at r = 0")
        return _eval(r, np.sign)
    if reg.kind == "hyperbola":
        return _eval(r, lambda a: a / np.hypot(a, eps))
    if reg.kind == "tanh_log":
        return _eval(r, lambda a: np.tanh(a / eps))
    return _eval(r, lambda a: (2.0 / np.pi) * np.arctan(a / eps))


def f_second(reg: FluxRegularization, r: Scalar) -> Scalar:
    """Evaluate f''(r); zero off the origin for the abs kind."""
    eps = reg.epsilon
    if reg.kind == "abs":
        arr = np.asarray(r, dtype=float)
        if np.any(arr == 0.0):
            raise NondifferentiableError("|r| has no curvature at r = 0")
        return _eval(r, np.zeros_like)
    if reg.kind == "hyperbola":
        return _eval(r, lambda a: eps * eps / np.hypot(a, eps) ** 3)
    if reg.kind == "tanh_log":
        def sech2(a):
            e = np.exp(-np.abs(a) / eps)
            s = 2.0 * e / (1.0 + e * e)
            return s * s
        return _eval(r, lambda a: sech2(a) / eps)
    return _eval(r, lambda a: (2.0 / (np.pi * eps)) / (1.0 + (a / eps) ** 2))


def f_second_sup(reg: FluxRegularization, lam: float, r_max: float = 50.0,
                 samples: int = 4001) -> float:
    """max f'' over the sampled band |r| >= lam (even in r, so one side).

    The sample grid includes r = lam exactly; for the built-in kinds f''
    decreases in |r|, so the sampled maximum is the analytic one.
    """
    if lam <= 0 or r_max <= lam:
        raise ConfigurationError("need 0 < lam < r_max for the decay probe")
    band = np.linspace(lam, r_max, samples)
    return float(np.max(f_second(reg, band)))


@dataclass(frozen=True)
class ConstraintRegularization:
    """Surrogate for the constraint force on [-1, 1] with parameter delta.

    `c1_piecewise` is continuously differentiable with slope cap 1/delta;
    `yosida` is (r - clamp(r, -1, 1))/delta, Lipschitz but not C^1 at the
    two corners (its generalized derivative takes the right-continuous
    branch); `hard` (delta = 0) is the exact-constraint label accepted
    only as a continuation target, never evaluated pointwise.
    """

    kind: str
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ConfigurationError(
                f"unknown constraint kind {self.kind!r}; choose from "
                f"{CONSTRAINT_KINDS}")
        if not np.isfinite(self.delta) or not 0.0 <= self.delta <= 1.0:
            raise ConfigurationError(
                f"delta must lie in [0, 1], got {self.delta}")
        if self.kind == "hard" and self.delta != 0.0:
            raise ConfigurationError("hard kind requires delta = 0")
        if self.kind != "hard" and self.delta == 0.0:
            raise ConfigurationError(
                f"{self.kind} kind requires delta > 0; the delta = 0 limit "
                "is reached by continuation, not direct evaluation")

    @property
    def is_pointwise(self) -> bool:
        return self.kind != "hard"

    @property
    def slope_cap(self) -> float:
        """C_K = 1/delta, the largest slope of K for pointwise kinds."""
        if self.kind == "hard":
            return math.inf
        return 1.0 / self.delta


def _require_pointwise(creg: ConstraintRegularization):
    if not creg.is_pointwise:
        raise ConstraintKindError(
            "hard constraint kind has no pointwise force; use a delta > 0 "
            "kind or the continuation driver")


def k_eval(creg: ConstraintRegularization, r: Scalar) -> Scalar:
    """Constraint force K(r): zero on [-1, 1], odd, slope at most 1/delta."""
    _require_pointwise(creg)
    d = creg.delta
    if creg.kind == "yosida":
        return _eval(r, lambda a: (a - np.clip(a, -1.0, 1.0)) / d)

    def piecewise(a):
        mag = np.abs(a)
        mid = (mag - 1.0) ** 2 / (2.0 * d * d)
        outer = mag / d - 1.0 / d - 0.5
        out = np.where(mag <= 1.0, 0.0, np.where(mag <= 1.0 + d, mid, outer))
        return np.sign(a) * out
    return _eval(r, piecewise)


def k_prime(creg: ConstraintRegularization, r: Scalar) -> Scalar:
    """Derivative K'(r), in [0, 1/delta]."""
    _require_pointwise(creg)
    d = creg.delta
    if creg.kind == "yosida":
        # right-continuous branch of the generalized derivative
        return _eval(r, lambda a: np.where(
            (a >= 1.0) | (a < -1.0), 1.0 / d, 0.0))

    def piecewise(a):
        mag = np.abs(a)
        mid = (mag - 1.0) / (d * d)
        return np.where(mag <= 1.0, 0.0, np.where(mag <= 1.0 + d, mid, 1.0 / d))
    return _eval(r, piecewise)


def khat_eval(creg: ConstraintRegularization, r: Scalar) -> Scalar:
    """Primitive of K with khat(r) = 0 on [-1, 1].

    For the hard kind this is the exact indicator: 0 inside [-1, 1] and
    +inf outside, which is what the continuation bookkeeping needs.
    """
    d = creg.delta
    if creg.kind == "hard":
        return _eval(r, lambda a: np.where(np.abs(a) <= 1.0, 0.0, np.inf))
    if creg.kind == "yosida":
        return _eval(r, lambda a: np.maximum(np.abs(a) - 1.0, 0.0) ** 2 / (2.0 * d))

    def piecewise(a):
        mag = np.abs(a)
        mid = (mag - 1.0) ** 3 / (6.0 * d * d)
        outer = (d / 6.0 + (mag * mag - (1.0 + d) ** 2) / (2.0 * d)
                 - (1.0 / d + 0.5) * (mag - 1.0 - d))
        return np.where(mag <= 1.0, 0.0, np.where(mag <= 1.0 + d, mid, outer))
    return _eval(r, piecewise)


@dataclass(frozen=True)
class Reaction:
    """Cubic reaction g(r) = a3 r^3 + a1 r + a0 with a3 >= 0.

    Derived quantities: the semi-monotonicity constant C_g = max(0, -a1)
    (g' = 3 a3 r^2 + a1 >= a1 everywhere), and the additive offset that
    makes the primitive G nonnegative with min G = 0.
    """

    a3: float = 0.0
    a1: float = 0.0
    a0: float = 0.0
    C_g: float = field(init=False)
    offset: float = field(init=False)

    def __post_init__(self):
        for name in ("a3", "a1", "a0"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"reaction coefficient {name} not finite")
        if self.a3 < 0:
            raise ConfigurationError(
                f"cubic leading coefficient must be >= 0, got {self.a3}")
        if self.a3 == 0 and (self.a1 < 0 or (self.a1 == 0 and self.a0 != 0)):
            raise ConfigurationError(
                "reaction primitive is unbounded below; need a3 > 0, or "
                "a1 > 0, or g identically zero")
        object.__setattr__(self, "C_g", max(0.0, -self.a1))
        object.__setattr__(self, "offset", self._primitive_offset())

    def _primitive_offset(self) -> float:
        def primitive(r):
            return self.a3 * r ** 4 / 4.0 + self.a1 * r * r / 2.0 + self.a0 * r
        if self.a3 == 0.0:
            if self.a1 == 0.0:
                return 0.0
            return -primitive(-self.a0 / self.a1)
        roots = np.roots([self.a3, 0.0, self.a1, self.a0])
        real = roots[np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots.real))].real
        return -float(np.min(primitive(real)))


def double_well() -> Reaction:
    """The classical double well g(r) = r^3 - r, G(r) = (r^2 - 1)^2 / 4."""
    return Reaction(a3=1.0, a1=-1.0, a0=0.0)


def g_eval(reaction: Reaction, r: Scalar) -> Scalar:
    return _eval(r, lambda a: reaction.a3 * a ** 3 + reaction.a1 * a + reaction.a0)


def g_prime(reaction: Reaction, r: Scalar) -> Scalar:
    return _eval(r, lambda a: 3.0 * reaction.a3 * a * a + reaction.a1)


def G_eval(reaction: Reaction, r: Scalar) -> Scalar:
    """Nonnegative primitive of g (offset so that min G = 0)."""
    return _eval(r, lambda a: reaction.a3 * a ** 4 / 4.0
                 + reaction.a1 * a * a / 2.0 + reaction.a0 * a + reaction.offset)


@dataclass(frozen=True)
class PhysicsParams:
    """Diffusion strength nu and the two cost weights."""

    nu: float = 0.5
    M_u: float = 1.0
    M_w: float = 1.0

    def __post_init__(self):
        for name in ("nu", "M_u", "M_w"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"parameter {name} not finite")
        if self.M_u < 0 or self.M_w < 0:
            raise ConfigurationError("cost weights M_u, M_w must be >= 0")
        # nu <= 0 is representable so the validator can report it as an
        # A1 failure; solvers refuse to run on such a setup.


def resolvent(reg: FluxRegularization, nu: float, z: float) -> float:
    """Solve f'(y) + nu^2 y = z for y.

    Closed-form shrinkage for the abs kind; safeguarded Newton/bisection
    otherwise.  The map is nonexpansive with constant 1/nu^2.
    """
    if not np.isfinite(nu) or nu <= 0:
        raise ConfigurationError("resolvent requires nu > 0")
    z = float(z)
    nu2 = nu * nu
    if reg.kind == "abs":
        return math.copysign(max(abs(z) - 1.0, 0.0), z) / nu2
    # |f'| <= 1 brackets the root between (z -+ 1)/nu^2.  The residual slope
    # f'' + nu^2 can be as small as nu^2, so a residual stopping rule leaves a
    # root error of residual/nu^2; to keep pairwise nonexpansiveness sharp to
    # ~1e-12 the bracket is driven down to a few ulps instead.
    lo = (z - 1.0) / nu2
    hi = (z + 1.0) / nu2
    y = min(max(z / nu2, lo), hi)
    for _ in range(200):
        val = f_prime(reg, y) + nu2 * y - z
        if val == 0.0:
            return y
        if val > 0.0:
            hi = y
        else:
            lo = y
        if hi - lo <= 4e-16 * (1.0 + abs(lo) + abs(hi)):
            break
        step = val / (f_second(reg, y) + nu2)
        y_new = y - step
        if not lo < y_new < hi:
            y_new = 0.5 * (lo + hi)
        if y_new == y:
            y_new = 0.5 * (lo + hi)
            if y_new == y:
                return y
        y = y_new
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class AssumptionCheck:
    ident: str
    name: str
    passed: bool
    detail: str
    warning: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple
    constants: dict

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    @property
    def warnings(self) -> list:
        return [c for c in self.checks if c.warning]

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            line = f"{c.ident} {c.name}: {status} ({c.detail})"
            if c.warning:
                line += f" [warning: {c.warning}]"
            lines.append(line)
        return "\n".join(lines)


def tau_star(reaction: Reaction) -> float:
    """Step-size ceiling 1/(8 (C_g + 1))."""
    return 1.0 / (8.0 * (reaction.C_g + 1.0))


def validate_assumptions(setup) -> ValidationReport:
    """Check A1..A6 for a model setup; reports, never raises.

    Sampled numeric probes back the closed-form reasoning: growth and
    convexity of f on [-50, 50], decay of sup f'' on |r| >= lam for
    lam in {0.5, 1, 2} along the tail epsilon / 4^k, constraint
    inactivity on [-1, 1], and the slope cap 1/delta.
    """
    checks = []
    flux = setup.flux
    creg = setup.constraint
    reaction = setup.reaction
    params = setup.params

    # A1 positive diffusion
    checks.append(AssumptionCheck(
        "A1", "positive diffusion", bool(params.nu > 0),
        f"nu = {params.nu}"))

    # A2 flux family
    if not flux.is_smooth:
        checks.append(AssumptionCheck(
            "A2", "flux regularity", False,
            "abs kind is the nonsmooth limit label; it is reached by "
            "continuation, never solved directly"))
    else:
        band = np.linspace(-50.0, 50.0, 5001)
        vals = f_eval(flux, band)
        der = f_prime(flux, band)
        cur = f_second(flux, band)
        range_ok = bool(0.0 < flux.epsilon <= 1.0)
        growth_ok = bool(np.all(np.abs(der) <= flux.C0 * (1.0 + np.abs(band)) + 1e-12))
        shape_ok = bool(abs(f_eval(flux, 0.0)) <= 1e-15
                        and np.all(vals >= -1e-15) and np.all(cur >= -1e-15))
        # The sup of f'' over |r| >= lam is not monotone in epsilon (it
        # peaks near epsilon ~ lam), so a single halving can go uphill.
        # What the assumption needs is the eps -> 0 tail, probed here at
        # eps/16 and eps/64: well past the hump and clearly decayed.
        decay_ok = True
        for lam in (0.5, 1.0, 2.0):
            sups = [f_second_sup(FluxRegularization(flux.kind, flux.epsilon / 4.0 ** k), lam)
                    for k in range(4)]
            if sups[3] > 0.5 * sups[0] + 1e-300 or sups[3] > sups[2] + 1e-300:
                decay_ok = False
        checks.append(AssumptionCheck(
            "A2", "flux regularity", range_ok and growth_ok and shape_ok and decay_ok,
            f"kind = {flux.kind}, eps = {flux.epsilon}; eps in (0, 1] {range_ok}, "
            f"growth {growth_ok}, shape {shape_ok}, curvature decay {decay_ok}"))

    # A3 semi-monotone reaction with nonnegative primitive
    rband = np.linspace(-10.0, 10.0, 2001)
    gp = g_prime(reaction, rband)
    semi_ok = bool(np.all(gp >= -reaction.C_g - 1e-12))
    g_min = float(np.min(G_eval(reaction, rband)))
    prim_ok = bool(g_min >= -1e-12)
    checks.append(AssumptionCheck(
        "A3", "semi-monotone reaction", semi_ok and prim_ok,
        f"C_g = {reaction.C_g}, sampled min G = {g_min:.3e}"))

    # A4 constraint family
    if not creg.is_pointwise:
        checks.append(AssumptionCheck(
            "A4", "constraint regularity", False,
            "hard kind has no pointwise force; continuation target only"))
    else:
        inside = np.linspace(-1.0, 1.0, 801)
        outside = np.linspace(-1.0 - 3.0 * creg.delta, 1.0 + 3.0 * creg.delta, 1201)
        kin = k_eval(creg, inside)
        kout = k_eval(creg, outside)
        kp = k_prime(creg, outside)
        sign_ok = bool(np.all(kout * outside >= -1e-15))
        inactive_ok = bool(np.all(kin == 0.0))
        slope_ok = bool(np.all(kp >= 0.0)
                        and np.all(kp <= creg.slope_cap + 1e-9))
        warning = ""
        if creg.kind == "yosida":
            warning = ("yosida force is Lipschitz but not C^1 at r = -1, 1; "
                       "its generalized derivative uses the right-continuous "
                       "branch")
        checks.append(AssumptionCheck(
            "A4", "constraint regularity", sign_ok and inactive_ok and slope_ok,
            f"kind = {creg.kind}, delta = {creg.delta}, slope cap = "
            f"{creg.slope_cap:.4g}", warning=warning))

    # A5 step-size ceiling (vacuous for a zero-step horizon)
    ceiling = tau_star(reaction)
    checks.append(AssumptionCheck(
        "A5", "step-size ceiling", bool(setup.n == 0 or 0.0 < setup.tau < ceiling),
        f"tau = {setup.tau} vs tau* = 1/(8*(C_g+1)) = {ceiling}"))

    # A6 target data
    wad_ok = (setup.w_ad is not None
              and setup.w_ad.shape == (setup.n, setup.grid.n_nodes)
              and bool(np.all(np.isfinite(setup.w_ad))))
    w0_ok = bool(np.all(np.isfinite(setup.w0)))
    khat0 = khat_eval(creg, setup.w0) if w0_ok else np.inf
    w0_ok = w0_ok and bool(np.all(np.isfinite(khat0)))
    checks.append(AssumptionCheck(
        "A6", "data admissibility", bool(wad_ok and w0_ok),
        f"target shape ok = {wad_ok}, initial khat finite = {w0_ok}"))

    constants = {
        "C0": flux.C0,
        "C_g": reaction.C_g,
        "tau_star": ceiling,
        "tau": setup.tau,
        "C_K": creg.slope_cap,
    }
    return ValidationReport(checks=tuple(checks), constants=constants)


def require_valid(setup) -> ValidationReport:
    """Validate and raise AssumptionError on any failed check."""
    report = validate_assumptions(setup)
    if not report.ok:
        failed = ", ".join(
            f"{c.ident} ({c.name}: {c.detail})" for c in report.failures)
        raise AssumptionError(f"setup violates {failed}")
    return report

"""Run configuration: file parsing, defaults, and ModelSetup assembly.

Configs are TOML files (JSON with the same section layout is also
accepted, which is how a run's `config_echo.json` can be replayed
bit-for-bit).  Every key has a documented default; unknown sections or
keys and type mismatches are rejected with the offending name, and the
assembled setup is validated against the structural assumptions before
any solver sees it.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .control import OptimizeOptions
from .errors import ConfigurationError
from .limits import Schedule, default_schedule
from .mesh import Grid, build_grid
from .physics import (ConstraintRegularization, FluxRegularization,
                      PhysicsParams, Reaction)
from .state import ModelSetup, StepOptions

_FAMILIES = ("constant", "sine", "tanh")

# section -> key -> (type tag, default).  This table is the whole config
# surface; anything not in it is an unknown-key error.
_SCHEMA: Dict[str, Dict[str, Any]] = {
    "grid": {"L": ("float", 1.0), "J": ("int", 200)},
    "time": {"T": ("float", 1.0), "n": ("int", 20)},
    "physics": {"nu": ("float", 0.5), "M_u": ("float", 1.0),
                "M_w": ("float", 1.0)},
    "regularization": {"f_kind": ("str", "hyperbola"),
                       "epsilon": ("float", 0.25),
                       "k_kind": ("str", "c1_piecewise"),
                       "delta": ("float", 0.25)},
    "reaction": {"a3": ("float", 1.0), "a1": ("float", -1.0),
                 "a0": ("float", 0.0)},
    "data": {"w0_family": ("str", "sine"), "w0_value": ("float", 0.0),
             "w0_amplitude": ("float", 0.8), "w0_mode": ("int", 1),
             "w0_scale": ("float", 0.2), "w0_clamp": ("bool", True),
             "wad_family": ("str", "tanh"), "wad_value": ("float", 0.0),
             "wad_amplitude": ("float", 1.0), "wad_mode": ("int", 1),
             "wad_scale": ("float", 0.2), "wad_clamp": ("bool", False)},
    "solver": {"newton_tol": ("float", 1e-11), "max_newton": ("int", 50)},
    "optimize": {"max_iters": ("int", 500), "tol": ("float", 1e-6),
                 "step_rule": ("str", "armijo_backtracking"),
                 "initial_step": ("float", 1.0)},
    "continuation": {"rows": ("int", 8),
                     "eps_floor": ("float", 2.0 ** -12),
                     "delta_floor": ("float", 2.0 ** -12),
                     "mode": ("str", "control")},
    "output": {"dir": ("str", "out"), "seed": ("int", 0)},
}


def _cast(section: str, key: str, tag: str, value):
    ok = {
        "float": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "str": lambda v: isinstance(v, str),
        "bool": lambda v: isinstance(v, bool),
    }[tag]
    if not ok(value):
        raise ConfigurationError(
            f"[{section}] key {key!r} expects {tag}, got "
            f"{type(value).__name__} ({value!r})")
    return float(value) if tag == "float" else value


@dataclass(frozen=True)
class FieldSpec:
    """Closed-form spatial profile for initial or target data.

    constant: value; sine: amplitude sin(pi mode x / L); tanh:
    tanh(x / scale).  clamp additionally clips to [-1, 1].
    """

    family: str = "constant"
    value: float = 0.0
    amplitude: float = 0.8
    mode: int = 1
    scale: float = 0.2
    clamp: bool = False

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigurationError(
                f"unknown data family {self.family!r}; pick one of {_FAMILIES}")
        if self.family == "tanh" and self.scale == 0:
            raise ConfigurationError("tanh data family needs scale != 0")

    def evaluate(self, grid: Grid) -> np.ndarray:
        if self.family == "constant":
            out = np.full(grid.n_nodes, self.value)
        elif self.family == "sine":
            out = self.amplitude * np.sin(np.pi * self.mode * grid.x / grid.L)
        else:
            out = np.tanh(grid.x / self.scale)
        if self.clamp:
            out = np.clip(out, -1.0, 1.0)
        return out


@dataclass
class RunConfig:
    """Resolved configuration, one attribute per schema key."""

    L: float = 1.0
    J: int = 200
    T: float = 1.0
    n: int = 20
    nu: float = 0.5
    M_u: float = 1.0
    M_w: float = 1.0
    f_kind: str = "hyperbola"
    epsilon: float = 0.25
    k_kind: str = "c1_piecewise"
    delta: float = 0.25
    a3: float = 1.0
    a1: float = -1.0
    a0: float = 0.0
    w0: FieldSpec = field(default_factory=lambda: FieldSpec(
        family="sine", amplitude=0.8, mode=1, clamp=True))
    wad: FieldSpec = field(default_factory=lambda: FieldSpec(
        family="tanh", amplitude=1.0, scale=0.2))
    newton_tol: float = 1e-11
    max_newton: int = 50
    opt_max_iters: int = 500
    opt_tol: float = 1e-6
    step_rule: str = "armijo_backtracking"
    initial_step: float = 1.0
    cont_rows: int = 8
    eps_floor: float = 2.0 ** -12
    delta_floor: float = 2.0 ** -12
    cont_mode: str = "control"
    out_dir: str = "out"
    seed: int = 0

    def build_setup(self, validate: bool = True) -> ModelSetup:
        grid = build_grid(self.L, self.J)
        wad_profile = self.wad.evaluate(grid)
        setup = ModelSetup(
            grid=grid,
            params=PhysicsParams(nu=self.nu, M_u=self.M_u, M_w=self.M_w),
            flux=FluxRegularization(self.f_kind, self.epsilon),
            constraint=ConstraintRegularization(self.k_kind, self.delta),
            reaction=Reaction(a3=self.a3, a1=self.a1, a0=self.a0),
            T=self.T, n=self.n,
            w0=self.w0.evaluate(grid),
            w_ad=np.tile(wad_profile, (self.n, 1)))
        if validate:
            setup.ensure_valid()
        return setup

    def step_options(self) -> StepOptions:
        return StepOptions(newton_tol=self.newton_tol,
                           max_newton=self.max_newton)

    def optimize_options(self) -> OptimizeOptions:
        return OptimizeOptions(max_iters=self.opt_max_iters, tol=self.opt_tol,
                               step_rule=self.step_rule,
                               initial_step=self.initial_step,
                               step_opts=self.step_options())

    def schedule(self) -> Schedule:
        return default_schedule(self.cont_rows, self.eps_floor,
                                self.delta_floor)

    def validate_options(self):
        """Construct every derived option object once, surfacing errors."""
        self.step_options()
        self.optimize_options()
        if self.cont_mode not in ("state", "control"):
            raise ConfigurationError(
                f"[continuation] mode must be 'state' or 'control', "
                f"got {self.cont_mode!r}")
        self.schedule()

    def as_dict(self) -> Dict[str, Dict[str, Any]]:
        """Nested section/key mapping mirroring the file layout."""
        flat = _flatten(self)
        return {sec: {key: flat[(sec, key)] for key in keys}
                for sec, keys in _SCHEMA.items()}


def _flatten(cfg: RunConfig) -> Dict[tuple, Any]:
    out = {
        ("grid", "L"): cfg.L, ("grid", "J"): cfg.J,
        ("time", "T"): cfg.T, ("time", "n"): cfg.n,
        ("physics", "nu"): cfg.nu, ("physics", "M_u"): cfg.M_u,
        ("physics", "M_w"): cfg.M_w,
        ("regularization", "f_kind"): cfg.f_kind,
        ("regularization", "epsilon"): cfg.epsilon,
        ("regularization", "k_kind"): cfg.k_kind,
        ("regularization", "delta"): cfg.delta,
        ("reaction", "a3"): cfg.a3, ("reaction", "a1"): cfg.a1,
        ("reaction", "a0"): cfg.a0,
        ("solver", "newton_tol"): cfg.newton_tol,
        ("solver", "max_newton"): cfg.max_newton,
        ("optimize", "max_iters"): cfg.opt_max_iters,
        ("optimize", "tol"): cfg.opt_tol,
        ("optimize", "step_rule"): cfg.step_rule,
        ("optimize", "initial_step"): cfg.initial_step,
        ("continuation", "rows"): cfg.cont_rows,
        ("continuation", "eps_floor"): cfg.eps_floor,
        ("continuation", "delta_floor"): cfg.delta_floor,
        ("continuation", "mode"): cfg.cont_mode,
        ("output", "dir"): cfg.out_dir, ("output", "seed"): cfg.seed,
    }
    for prefix, spec in (("w0", cfg.w0), ("wad", cfg.wad)):
        out[("data", f"{prefix}_family")] = spec.family
        out[("data", f"{prefix}_value")] = spec.value
        out[("data", f"{prefix}_amplitude")] = spec.amplitude
        out[("data", f"{prefix}_mode")] = spec.mode
        out[("data", f"{prefix}_scale")] = spec.scale
        out[("data", f"{prefix}_clamp")] = spec.clamp
    return out


def from_mapping(data: Dict[str, Any], source: str = "<mapping>") -> RunConfig:
    """Validate a nested section mapping against the schema and resolve."""
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: top level must be a table")
    resolved: Dict[tuple, Any] = {}
    for section, entries in data.items():
        if section not in _SCHEMA:
            raise ConfigurationError(
                f"{source}: unknown section [{section}]")
        if not isinstance(entries, dict):
            raise ConfigurationError(
                f"{source}: [{section}] must be a table of keys")
        for key, value in entries.items():
            if key not in _SCHEMA[section]:
                raise ConfigurationError(
                    f"{source}: [{section}] unknown key {key!r}")
            tag, _ = _SCHEMA[section][key]
            resolved[(section, key)] = _cast(section, key, tag, value)

    def get(section, key):
        if (section, key) in resolved:
            return resolved[(section, key)]
        return _SCHEMA[section][key][1]

    def spec(prefix):
        return FieldSpec(family=get("data", f"{prefix}_family"),
                         value=get("data", f"{prefix}_value"),
                         amplitude=get("data", f"{prefix}_amplitude"),
                         mode=get("data", f"{prefix}_mode"),
                         scale=get("data", f"{prefix}_scale"),
                         clamp=get("data", f"{prefix}_clamp"))

    return RunConfig(
        L=get("grid", "L"), J=get("grid", "J"),
        T=get("time", "T"), n=get("time", "n"),
        nu=get("physics", "nu"), M_u=get("physics", "M_u"),
        M_w=get("physics", "M_w"),
        f_kind=get("regularization", "f_kind"),
        epsilon=get("regularization", "epsilon"),
        k_kind=get("regularization", "k_kind"),
        delta=get("regularization", "delta"),
        a3=get("reaction", "a3"), a1=get("reaction", "a1"),
        a0=get("reaction", "a0"),
        w0=spec("w0"), wad=spec("wad"),
        newton_tol=get("solver", "newton_tol"),
        max_newton=get("solver", "max_newton"),
        opt_max_iters=get("optimize", "max_iters"),
        opt_tol=get("optimize", "tol"),
        step_rule=get("optimize", "step_rule"),
        initial_step=get("optimize", "initial_step"),
        cont_rows=get("continuation", "rows"),
        eps_floor=get("continuation", "eps_floor"),
        delta_floor=get("continuation", "delta_floor"),
        cont_mode=get("continuation", "mode"),
        out_dir=get("output", "dir"), seed=get("output", "seed"))


def parse_config(path, validate: bool = True) -> RunConfig:
    """Load a TOML (or echoed JSON) config file and validate it.

    With validate=True the assembled ModelSetup is also checked against
    the structural assumptions, so an inadmissible time step or a broken
    regularization fails here, before any command runs.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    cfg = from_mapping(data, source=str(path))
    if validate:
        cfg.build_setup(validate=True)
    cfg.validate_options()
    return cfg


def default_config() -> RunConfig:
    return RunConfig()

"""Command-line entry point.

    ac-control <state|optimize|gradcheck|continuation|verify>
               [--config path] [--out dir] [--seed int] [--export] ...

Every command writes `report.json` and `config_echo.json` into the
output directory; `--export` adds the plot-ready CSV artifacts.  The
echo file is itself a valid config, so replaying a run is

    ac-control state --config out/config_echo.json --out out2

and produces byte-identical CSVs on the same platform.

Exit codes: 0 all checks passed, 1 configuration or assumption error,
2 solver failure, 3 a verification check failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import control, limits, physics, sensitivity, verify
from .config import RunConfig, default_config, parse_config
from .errors import ConfigurationError, SolverError
from .mesh import average_edges_to_nodes, forward_diff
from .state import energy_ledger_check, solve_state, xi_bound_check


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _write_csv(path: Path, header: str, rows: Iterable[tuple]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(cfg: RunConfig, out: Path):
    _write_json(out / "config_echo.json", cfg.as_dict())


def _trajectory_rows(setup, traj, u):
    grid = setup.grid
    nu2 = setup.params.nu ** 2
    for i in range(setup.n + 1):
        w_i = traj.w[i]
        dw = forward_diff(grid, w_i)
        if i == 0:
            u_i = np.zeros(grid.n_nodes)
            xi_i = physics.k_eval(setup.constraint, w_i)
            fprime = physics.f_prime(setup.flux, dw)
        else:
            u_i = u[i - 1]
            xi_i = traj.xi[i - 1]
            fprime = traj.flux_edges[i - 1]
        flux_nodes = average_edges_to_nodes(grid, fprime + nu2 * dw)
        dw_nodes = average_edges_to_nodes(grid, dw)
        for j in range(grid.n_nodes):
            yield (i, j, grid.x[j], w_i[j], u_i[j], xi_i[j],
                   flux_nodes[j], dw_nodes[j])


def _export_trajectory(setup, traj, u, out: Path, name="trajectory.csv"):
    _write_csv(out / name, "i,j,x,w,u,xi,flux,dwdx",
               _trajectory_rows(setup, traj, u))


def _export_ledger(ledger, out: Path):
    _write_csv(out / "ledger.csv", "i,kinetic,free_energy,rhs,slack",
               ((r.i, r.kinetic, r.free_energy, r.rhs, r.slack)
                for r in ledger.rows))


def _export_adjoint(setup, p, chi, zeta, gamma_res, out: Path):
    grid = setup.grid
    rows = []
    for i in range(1, setup.n + 1):
        for j in range(grid.n_nodes):
            rows.append((i, j, grid.x[j], p.fields[i - 1][j],
                         chi.fields[i - 1][j],
                         zeta.curvature[i - 1].coeffs[j],
                         gamma_res[i - 1][j]))
    _write_csv(out / "adjoint.csv", "i,j,x,p,chi,zeta_coeff,gamma_residual",
               rows)


def cmd_state(cfg: RunConfig, out: Path, seed: int, export: bool) -> int:
    setup = cfg.build_setup()
    u = setup.zero_control()
    t0 = time.perf_counter()
    traj = solve_state(setup, u, cfg.step_options())
    runtime = time.perf_counter() - t0
    ledger = energy_ledger_check(setup, traj, u)
    xi_rep = xi_bound_check(setup, traj, u)
    report = {
        "command": "state", "seed": seed, "ok": bool(ledger.passed),
        "runtime_s": round(runtime, 4),
        "ledger": {"passed": bool(ledger.passed),
                   "min_slack": float(min(r.slack for r in ledger.rows))},
        "xi_bound": {"holds_linear": bool(xi_rep.holds_linear),
                     "holds_squared": bool(xi_rep.holds_squared)},
        "config": cfg.as_dict(),
    }
    _write_json(out / "report.json", report)
    _echo_config(cfg, out)
    _export_ledger(ledger, out)
    if export:
        _export_trajectory(setup, traj, u, out)
    return 0 if ledger.passed else 3


def cmd_optimize(cfg: RunConfig, out: Path, seed: int, export: bool) -> int:
    setup = cfg.build_setup()
    t0 = time.perf_counter()
    result = control.optimize(setup, None, cfg.optimize_options())
    runtime = time.perf_counter() - t0
    _write_csv(out / "history.csv", "k,J,grad_norm,step,evals",
               ((r.k, r.cost, r.grad_norm, r.step, r.evals)
                for r in result.history))
    report = {
        "command": "optimize", "seed": seed,
        "ok": result.status == "converged",
        "status": result.status, "iterations": result.iterations,
        "cost": result.cost, "grad_norm": result.grad_norm,
        "threshold": result.threshold, "runtime_s": round(runtime, 4),
        "config": cfg.as_dict(),
    }
    _write_json(out / "report.json", report)
    _echo_config(cfg, out)
    if export:
        _export_trajectory(setup, result.state, result.u, out)
        chi = sensitivity.solve_linearization(setup, result.state, result.grad)
        zeta = sensitivity.compute_zeta(setup, result.state, result.adjoint)
        gamma_res = sensitivity.gamma_residual(setup, result.state,
                                               result.adjoint)
        _export_adjoint(setup, result.adjoint, chi, zeta, gamma_res, out)
    return 0 if result.status == "converged" else 3


def cmd_gradcheck(cfg: RunConfig, out: Path, seed: int, export: bool,
                  dirs: int = 5, lam: float = 1e-5) -> int:
    setup = cfg.build_setup()
    report = control.fd_gradient_check(setup, setup.zero_control(),
                                       directions=dirs, lambdas=(lam,),
                                       seed=seed)
    ok = report.max_rel_error <= 1e-5
    payload = {
        "command": "gradcheck", "seed": seed, "ok": bool(ok),
        "max_rel_error": report.max_rel_error,
        "directions": dirs, "lambda": lam,
        "base_cost": report.base_cost, "grad_norm": report.grad_norm,
        "taylor_ratios": report.taylor_ratios(),
        "rows": [{"direction": r.direction, "lambda": r.lam,
                  "analytic": r.analytic, "central": r.central,
                  "rel_error": r.rel_error, "taylor_ratio": r.taylor_ratio}
                 for r in report.rows],
        "config": cfg.as_dict(),
    }
    _write_json(out / "report.json", payload)
    _echo_config(cfg, out)
    return 0 if ok else 3


def _continuation_csv(out: Path, rows, rho_list, diag_rows=None):
    rhos = list(rho_list)
    header = ("m,eps,delta,dL2,dH1,dC0,dC1,cost,overshoot,"
              + ",".join(f"zeta_frac_rho_{r:g}" for r in rhos)
              + ",gamma_res,stationarity")
    table = []
    for idx, row in enumerate(rows):
        d = row.diffs
        diff_cols = ([""] * 4 if d is None
                     else [_fmt(d.L2), _fmt(d.H1), _fmt(d.C0), _fmt(d.C1)])
        if diag_rows is not None:
            diag = diag_rows[idx]
            zeta_cols = [_fmt(diag.zeta_frac[r]) for r in rhos]
            gamma_col = _fmt(diag.gamma0_norm)
            stat_col = _fmt(diag.stationarity)
        else:
            zeta_cols = [""] * len(rhos)
            gamma_col = ""
            stat_col = ""
        table.append([_fmt(row.m), _fmt(row.eps), _fmt(row.delta),
                      *diff_cols, _fmt(row.cost), _fmt(row.overshoot),
                      *zeta_cols, gamma_col, stat_col])
    with open(out / "continuation.csv", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(header + "\n")
        for cols in table:
            fh.write(",".join(cols) + "\n")


def cmd_continuation(cfg: RunConfig, out: Path, seed: int,
                     export: bool) -> int:
    setup = cfg.build_setup()
    schedule = cfg.schedule()
    rho_list = (0.5, 0.1, 0.01)
    t0 = time.perf_counter()
    if cfg.cont_mode == "state":
        result = limits.run_state_continuation(setup, setup.zero_control(),
                                               schedule, cfg.step_options(),
                                               keep_trajectories=False)
        _continuation_csv(out, result.rows, rho_list)
        report_rows = [{"m": r.m, "eps": r.eps, "delta": r.delta,
                        "cost": r.cost, "overshoot": r.overshoot,
                        "dC1": None if r.diffs is None else r.diffs.C1}
                       for r in result.rows]
        payload = {"command": "continuation", "mode": "state", "ok": True,
                   "rows": report_rows}
    else:
        cont = limits.run_control_continuation(setup, schedule,
                                               cfg.optimize_options())
        diag = limits.limit_diagnostics(setup, cont, rho_list)
        _continuation_csv(out, cont.rows, rho_list, diag.rows)
        report_rows = []
        for row, drow in zip(cont.rows, diag.rows):
            report_rows.append({
                "m": row.m, "eps": row.eps, "delta": row.delta,
                "cost": row.cost, "status": row.status,
                "stationarity": drow.stationarity,
                "overshoot": row.overshoot,
                "zeta_frac": {f"{r:g}": drow.zeta_frac[r] for r in rho_list},
                "gamma0_norm": drow.gamma0_norm,
                "zeta_agreement": drow.zeta_agreement,
                "refined_norm": drow.refined_norm,
            })
        payload = {"command": "continuation", "mode": "control", "ok": True,
                   "rows": report_rows,
                   "statuses": [r.status for r in cont.rows]}
    payload.update({"seed": seed, "runtime_s":
                    round(time.perf_counter() - t0, 4),
                    "config": cfg.as_dict()})
    _write_json(out / "report.json", payload)
    _echo_config(cfg, out)
    return 0


def cmd_verify(cfg: RunConfig, out: Path, seed: int, export: bool) -> int:
    t0 = time.perf_counter()
    report = verify.run_verify(cfg, seed,
                               progress=lambda r: print(r.line(), flush=True))
    payload = report.as_dict()
    payload.update({"command": "verify",
                    "runtime_s": round(time.perf_counter() - t0, 4),
                    "config": cfg.as_dict()})
    _write_json(out / "report.json", payload)
    _echo_config(cfg, out)
    print("verify:", "all checks passed" if report.ok else "CHECKS FAILED")
    return 0 if report.ok else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ac-control",
        description="Constrained Allen-Cahn state solves, adjoint gradients, "
                    "optimal control, and regularization-limit studies.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config (or echoed JSON); "
                                         "defaults apply when omitted")
    common.add_argument("--out", help="output directory (default from config)")
    common.add_argument("--seed", type=int, default=None,
                        help="seed for randomized probes (default from config)")
    common.add_argument("--export", action="store_true",
                        help="also write the CSV field artifacts")
    sub.add_parser("state", parents=[common],
                   help="solve the forward system and audit its energy ledger")
    sub.add_parser("optimize", parents=[common],
                   help="run the descent optimizer on the tracking problem")
    grad = sub.add_parser("gradcheck", parents=[common],
                          help="finite-difference check of the adjoint gradient")
    grad.add_argument("--dirs", type=int, default=5,
                      help="number of random directions (default 5)")
    grad.add_argument("--lambda", dest="lam", type=float, default=1e-5,
                      help="finite-difference step (default 1e-5)")
    sub.add_parser("continuation", parents=[common],
                   help="march the (eps, delta) schedule and tabulate limits")
    sub.add_parser("verify", parents=[common],
                   help="run every acceptance check and write report.json")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config else default_config()
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, out_dir=args.out)
        cfg.validate_options()
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "state":
            return cmd_state(cfg, out, cfg.seed, args.export)
        if args.command == "optimize":
            return cmd_optimize(cfg, out, cfg.seed, args.export)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, out, cfg.seed, args.export,
                                 dirs=args.dirs, lam=args.lam)
        if args.command == "continuation":
            return cmd_continuation(cfg, out, cfg.seed, args.export)
        return cmd_verify(cfg, out, cfg.seed, args.export)
    except ConfigurationError as exc:
        print(f"ac-control: configuration error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"ac-control: solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

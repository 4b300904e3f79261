"""Config schema, field families, and the command-line entry point."""

import dataclasses
import json
from types import SimpleNamespace

import numpy as np
import pytest

from ac_control import cli, config
from ac_control.errors import ConfigurationError

pc = config.parse_config


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ----------------------------------------------------------------- config

def test_default_config_values():
    cfg = config.default_config()
    assert (cfg.L, cfg.J, cfg.T, cfg.n) == (1.0, 200, 1.0, 20)
    assert (cfg.nu, cfg.M_u, cfg.M_w) == (0.5, 1.0, 1.0)
    assert (cfg.f_kind, cfg.epsilon) == ("hyperbola", 0.25)
    assert (cfg.k_kind, cfg.delta) == ("c1_piecewise", 0.25)
    assert (cfg.a3, cfg.a1, cfg.a0) == (1.0, -1.0, 0.0)
    assert cfg.w0.family == "sine" and cfg.w0.clamp
    assert cfg.wad.family == "tanh" and cfg.wad.scale == 0.2
    assert cfg.cont_rows == 8 and cfg.cont_mode == "control"
    assert cfg.out_dir == "out" and cfg.seed == 0


def test_empty_config_uses_defaults(tmp_path):
    cfg = pc(_write(tmp_path, ""))
    assert cfg == config.default_config()


def test_partial_config_merges(tmp_path):
    cfg = pc(_write(tmp_path, """
[grid]
J = 100

[regularization]
epsilon = 0.5

[data]
w0_family = "constant"
w0_value = 0.25
"""))
    assert cfg.J == 100 and cfg.epsilon == 0.5
    assert cfg.w0.family == "constant" and cfg.w0.value == 0.25
    assert cfg.n == 20                       # untouched default
    setup = cfg.build_setup()
    assert setup.grid.n_nodes == 101
    assert np.all(setup.w0 == 0.25)


def test_unknown_section_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match=r"unknown section \[mesh\]"):
        pc(_write(tmp_path, "[mesh]\nJ = 100\n"))


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match="unknown key 'nodes'"):
        pc(_write(tmp_path, "[grid]\nnodes = 100\n"))


def test_type_mismatch_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match=r"\[grid\] key 'J' expects int"):
        pc(_write(tmp_path, "[grid]\nJ = 1.5\n"))
    with pytest.raises(ConfigurationError, match="expects float"):
        pc(_write(tmp_path, "[physics]\nnu = true\n"))
    with pytest.raises(ConfigurationError, match="expects str"):
        pc(_write(tmp_path, "[regularization]\nf_kind = 3\n"))


def test_malformed_file_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot parse"):
        pc(_write(tmp_path, "[grid\nJ = "))
    with pytest.raises(ConfigurationError, match="cannot read"):
        pc(tmp_path / "missing.toml")


def test_inadmissible_step_rejected_at_parse(tmp_path):
    # n = 10 gives tau = 0.1 > tau* = 1/16 for the default double well
    with pytest.raises(ConfigurationError, match="A5"):
        pc(_write(tmp_path, "[time]\nn = 10\n"))
    cfg = pc(_write(tmp_path, "[time]\nn = 10\n"), validate=False)
    assert cfg.n == 10


def test_bad_option_values_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match="step rule"):
        pc(_write(tmp_path, "[optimize]\nstep_rule = \"exact\"\n"))
    with pytest.raises(ConfigurationError, match="mode"):
        pc(_write(tmp_path, "[continuation]\nmode = \"adjoint\"\n"))


def test_as_dict_round_trip(tmp_path):
    cfg = pc(_write(tmp_path, "[grid]\nJ = 64\n[output]\nseed = 5\n"))
    again = config.from_mapping(cfg.as_dict())
    assert again == cfg
    # and the mapping is JSON-serializable as the echo file relies on
    json.dumps(cfg.as_dict())


def test_json_config_accepted(tmp_path):
    cfg = config.default_config()
    p = tmp_path / "echo.json"
    p.write_text(json.dumps(cfg.as_dict()))
    assert pc(p) == cfg


def test_field_families(tmp_path):
    grid = config.build_grid(1.0, 4)
    const = config.FieldSpec(family="constant", value=0.3)
    assert np.all(const.evaluate(grid) == 0.3)
    sine = config.FieldSpec(family="sine", amplitude=2.0, mode=1, clamp=True)
    vals = sine.evaluate(grid)
    assert np.max(vals) <= 1.0 and vals[2] == 0.0
    tanh = config.FieldSpec(family="tanh", scale=0.2)
    assert tanh.evaluate(grid)[0] == pytest.approx(np.tanh(-5.0), rel=1e-15)
    with pytest.raises(ConfigurationError, match="family"):
        config.FieldSpec(family="bump")
    with pytest.raises(ConfigurationError, match="scale"):
        config.FieldSpec(family="tanh", scale=0.0)


# -------------------------------------------------------------------- CLI

def _fast_toml(extra=""):
    """Small grid/short horizon keeps CLI runs quick."""
    return "[grid]\nJ = 50\n\n[time]\nn = 20\n" + extra


def test_cli_state_export(tmp_path):
    cfgfile = _write(tmp_path, _fast_toml())
    out = tmp_path / "o1"
    rc = cli.main(["state", "--config", str(cfgfile), "--out", str(out),
                   "--export"])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["ok"] and report["ledger"]["passed"]
    assert report["command"] == "state"
    ledger_lines = (out / "ledger.csv").read_text().splitlines()
    assert ledger_lines[0] == "i,kinetic,free_energy,rhs,slack"
    assert len(ledger_lines) == 1 + 20
    traj_lines = (out / "trajectory.csv").read_text().splitlines()
    assert traj_lines[0] == "i,j,x,w,u,xi,flux,dwdx"
    assert len(traj_lines) == 1 + 21 * 51
    assert (out / "config_echo.json").exists()


def test_cli_gradcheck(tmp_path):
    cfgfile = _write(tmp_path, _fast_toml())
    out = tmp_path / "o2"
    rc = cli.main(["gradcheck", "--config", str(cfgfile), "--out", str(out),
                   "--dirs", "2", "--lambda", "1e-5"])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["ok"] and len(report["rows"]) == 2
    assert report["max_rel_error"] <= 1e-5
    assert report["directions"] == 2


def test_cli_optimize(tmp_path):
    cfgfile = _write(tmp_path, _fast_toml())
    out = tmp_path / "o3"
    rc = cli.main(["optimize", "--config", str(cfgfile), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "converged"
    hist = (out / "history.csv").read_text().splitlines()
    assert hist[0] == "k,J,grad_norm,step,evals"
    assert len(hist) >= 3
    costs = [float(line.split(",")[1]) for line in hist[1:]]
    assert all(b <= a for a, b in zip(costs, costs[1:]))


def test_cli_continuation_state_mode(tmp_path):
    cfgfile = _write(tmp_path, _fast_toml(
        "\n[continuation]\nrows = 4\nmode = \"state\"\n"))
    out = tmp_path / "o4"
    rc = cli.main(["continuation", "--config", str(cfgfile), "--out", str(out)])
    assert rc == 0
    lines = (out / "continuation.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[:9] == ["m", "eps", "delta", "dL2", "dH1", "dC0", "dC1",
                          "cost", "overshoot"]
    assert "zeta_frac_rho_0.5" in header and "stationarity" in header
    assert len(lines) == 1 + 4
    first = lines[1].split(",")
    assert first[0] == "1" and first[3] == ""    # no diff columns in row 1
    second = lines[2].split(",")
    assert float(second[6]) > 0.0                # dC1 present from row 2


def test_cli_continuation_control_mode(tmp_path):
    cfgfile = _write(tmp_path, _fast_toml(
        "\n[continuation]\nrows = 3\nmode = \"control\"\n"))
    out = tmp_path / "o5"
    rc = cli.main(["continuation", "--config", str(cfgfile), "--out", str(out)])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["mode"] == "control"
    assert report["statuses"] == ["converged"] * 3
    gammas = [row["gamma0_norm"] for row in report["rows"]]
    assert gammas[-1] < gammas[0]
    lines = (out / "continuation.csv").read_text().splitlines()
    assert len(lines) == 1 + 3
    assert lines[1].split(",")[-1] != ""         # stationarity filled


def test_cli_configuration_error_exit(tmp_path, capsys):
    cfgfile = _write(tmp_path, "[time]\nn = 10\n")
    rc = cli.main(["state", "--config", str(cfgfile),
                   "--out", str(tmp_path / "o6")])
    assert rc == 1
    assert "configuration error" in capsys.readouterr().err


def test_cli_solver_failure_exit(tmp_path, capsys):
    cfgfile = _write(tmp_path, _fast_toml("\n[solver]\nmax_newton = 1\n"))
    rc = cli.main(["state", "--config", str(cfgfile),
                   "--out", str(tmp_path / "o7")])
    assert rc == 2
    assert "solver failure" in capsys.readouterr().err


def test_cli_verify_exit_mapping(tmp_path, monkeypatch):
    calls = {}

    def fake_run_verify(cfg, seed, progress=None):
        calls["seed"] = seed
        return SimpleNamespace(ok=calls["ok"],
                               as_dict=lambda: {"ok": calls["ok"]})

    monkeypatch.setattr("ac_control.verify.run_verify", fake_run_verify)
    calls["ok"] = True
    assert cli.main(["verify", "--out", str(tmp_path / "v1"),
                     "--seed", "9"]) == 0
    assert calls["seed"] == 9
    calls["ok"] = False
    assert cli.main(["verify", "--out", str(tmp_path / "v2")]) == 3


def test_cli_echo_replay_bit_identical(tmp_path):
    cfgfile = _write(tmp_path, _fast_toml())
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert cli.main(["state", "--config", str(cfgfile), "--out", str(out1),
                     "--export"]) == 0
    assert cli.main(["state", "--config", str(out1 / "config_echo.json"),
                     "--out", str(out2), "--export"]) == 0
    for name in ("ledger.csv", "trajectory.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    echo1 = json.loads((out1 / "config_echo.json").read_text())
    echo2 = json.loads((out2 / "config_echo.json").read_text())
    echo1["output"]["dir"] = echo2["output"]["dir"] = ""
    assert echo1 == echo2


def test_cli_seed_and_out_override(tmp_path):
    cfgfile = _write(tmp_path, _fast_toml())
    out = tmp_path / "deep" / "nested"
    rc = cli.main(["gradcheck", "--config", str(cfgfile), "--out", str(out),
                   "--seed", "7", "--dirs", "1"])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 7
    echo = json.loads((out / "config_echo.json").read_text())
    assert echo["output"]["seed"] == 7


def test_cli_rejects_unknown_command():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])
    with pytest.raises(SystemExit):
        cli.main([])

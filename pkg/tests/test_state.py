"""Forward solver: per-step energy/residual consistency, Newton behavior,
energy ledger, constraint-force bounds, and solver determinism.
"""

import dataclasses

import numpy as np
import pytest

from ac_control import physics, state
from ac_control.errors import ConfigurationError, StepNonconvergenceError
from ac_control.mesh import inner_product

npr = np.random.default_rng


def _psi(setup, w):
    """Convex part Phi + Khat of the free energy (no reaction term)."""
    G = physics.G_eval(setup.reaction, w)
    return state.free_energy(setup, w) - float(np.dot(setup.grid.mass, G))


def test_step_energy_rest_state_oracle(setup):
    z = np.zeros(setup.grid.n_nodes)
    # only the double-well term survives: G(0) * |Omega| = 0.25 * 2
    assert state.step_energy(setup, z, z, z) == pytest.approx(0.5, abs=1e-14)


def test_step_energy_forcing_linearity(setup):
    rng = npr(0)
    w_prev = 0.1 * rng.standard_normal(setup.grid.n_nodes)
    w = 0.1 * rng.standard_normal(setup.grid.n_nodes)
    u = rng.standard_normal(setup.grid.n_nodes)
    c = 0.37
    base = state.step_energy(setup, w_prev, u, w)
    shifted = state.step_energy(setup, w_prev, u + c, w)
    expected = -setup.params.M_u * c * inner_product(setup.grid, np.ones_like(w), w)
    assert shifted - base == pytest.approx(expected, abs=1e-12)


def test_free_energy_oracles(setup):
    g = setup.grid
    assert state.free_energy(setup, np.ones(g.n_nodes)) == pytest.approx(0.0, abs=1e-14)
    assert state.free_energy(setup, np.zeros(g.n_nodes)) == pytest.approx(0.5, abs=1e-14)


def test_free_energy_linear_profile_near_abs_limit(setup):
    # w = x has |Dw| = 1: Phi ~ 2(1 + nu^2/2) once eps is tiny, plus
    # int G = int (x^2-1)^2/4 = 4/15
    s = setup.with_regularization(1e-6, setup.constraint.delta)
    oracle = 2.0 * (1.0 + 0.5 * setup.params.nu ** 2) + 4.0 / 15.0
    assert state.free_energy(s, s.grid.x.copy()) == pytest.approx(oracle, abs=1e-4)


def test_step_residual_steady_constant(setup):
    w = np.ones(setup.grid.n_nodes)   # g(1) = 0, inside the constraint band
    r = state.step_residual(setup, w, np.zeros_like(w), w)
    assert np.max(np.abs(r)) <= 1e-14


def test_step_residual_is_energy_gradient(setup, zero_traj):
    """(residual, phi)_X matches central differences of step_energy."""
    rng = npr(7)
    for i in (1, 3, 10):
        w, wp, ui = zero_traj.w[i], zero_traj.w[i - 1], np.zeros(setup.grid.n_nodes)
        res = state.step_residual(setup, wp, ui, w)
        for _ in range(3):
            phi = rng.standard_normal(w.shape)
            t = 1e-7
            fd = (state.step_energy(setup, wp, ui, w + t * phi)
                  - state.step_energy(setup, wp, ui, w - t * phi)) / (2 * t)
            ip = inner_product(setup.grid, res, phi)
            assert abs(fd - ip) <= 1e-6 * (1 + abs(ip))


def test_step_residual_forcing_shift(setup):
    rng = npr(1)
    w = 0.3 * rng.standard_normal(setup.grid.n_nodes)
    wp = 0.3 * rng.standard_normal(setup.grid.n_nodes)
    u = rng.standard_normal(setup.grid.n_nodes)
    c = 1.3
    r0 = state.step_residual(setup, wp, u, w)
    r1 = state.step_residual(setup, wp, u + c, w)
    assert np.allclose(r1, r0 - setup.params.M_u * c, atol=1e-12)


def test_solve_step_steady_start(setup, opts):
    w = np.ones(setup.grid.n_nodes)
    out, diag = state.solve_step(setup, w, np.zeros_like(w), opts)
    assert diag.iterations <= 1
    assert np.allclose(out, 1.0, atol=1e-12)


def test_solve_step_linear_reaction_oracle(setup, opts):
    """g(r) = r with constant data solves (w - c)/tau + w = 0 exactly."""
    lin = dataclasses.replace(setup, reaction=physics.Reaction(0.0, 1.0, 0.0))
    c = 0.5
    wp = np.full(setup.grid.n_nodes, c)
    w, diag = state.solve_step(lin, wp, np.zeros_like(wp), opts)
    assert np.max(np.abs(w - c / (1.0 + lin.tau))) <= 1e-12


def test_solve_step_superlinear_tail(setup, opts):
    w0 = setup.w0
    _, diag = state.solve_step(setup, w0, np.zeros_like(w0), opts)
    hist = diag.residual_norms
    ratios = [hist[k + 1] / hist[k] for k in range(len(hist) - 1)]
    assert min(ratios) <= 1e-2
    assert hist[-1] <= opts.newton_tol


def test_solve_step_res_below_tol(setup, opts, zero_traj):
    for i in range(1, setup.n + 1):
        r = state.step_residual(setup, zero_traj.w[i - 1],
                                np.zeros(setup.grid.n_nodes), zero_traj.w[i])
        from ac_control.mesh import x_norm
        assert x_norm(setup.grid, r) <= opts.newton_tol * 1.0


def test_solve_step_nonconvergence_carries_diagnostics(setup):
    tight = state.StepOptions(newton_tol=1e-11, max_newton=2)
    with pytest.raises(StepNonconvergenceError) as ei:
        state.solve_step(setup, setup.w0, np.zeros(setup.grid.n_nodes), tight,
                         step_index=4)
    err = ei.value
    assert err.step_index == 4
    assert err.last_iterate is not None
    assert len(err.residual_history) >= 1


def test_solve_state_well_bottom_is_stationary(setup, opts):
    s = dataclasses.replace(setup, w0=np.ones(setup.grid.n_nodes))
    traj = state.solve_state(s, s.zero_control(), opts)
    assert np.allclose(traj.w, 1.0, atol=1e-11)
    assert np.max(np.abs(traj.xi)) == 0.0


def test_solve_state_zero_steps(setup, opts):
    s = dataclasses.replace(setup, n=0, w_ad=setup.w_ad[:0])
    traj = state.solve_state(s, np.zeros((0, setup.grid.n_nodes)), opts)
    assert traj.w.shape == (1, setup.grid.n_nodes)
    assert np.array_equal(traj.w[0], setup.w0)


def test_solve_state_propagates_step_index(setup):
    tight = state.StepOptions(newton_tol=1e-11, max_newton=2)
    with pytest.raises(StepNonconvergenceError) as ei:
        state.solve_state(setup, setup.zero_control(), tight)
    assert ei.value.step_index == 1


def test_free_energy_decreases_unforced(setup, zero_traj):
    F = [state.free_energy(setup, w) for w in zero_traj.w]
    for a, b in zip(F, F[1:]):
        assert b <= a + 1e-12


def test_energy_ledger_default_passes(setup, zero_traj):
    rep = state.energy_ledger_check(setup, zero_traj, setup.zero_control())
    assert rep.passed
    assert all(row.slack >= -1e-9 * (1 + abs(row.free_energy)) for row in rep.rows)


def test_energy_ledger_stationary_slack_zero(setup, opts):
    s = dataclasses.replace(setup, w0=np.ones(setup.grid.n_nodes))
    traj = state.solve_state(s, s.zero_control(), opts)
    rep = state.energy_ledger_check(s, traj, s.zero_control())
    for row in rep.rows:
        assert abs(row.slack) <= 1e-12
        assert row.rhs == 0.0


def test_energy_ledger_negative_control(setup, opts):
    traj = state.solve_state(setup, setup.zero_control(), opts)
    traj.w[setup.n // 2] = traj.w[setup.n // 2] + 0.25
    rep = state.energy_ledger_check(setup, traj, setup.zero_control())
    assert not rep.passed


def test_xi_zero_inside_band(setup, zero_traj):
    # the unforced default run never leaves [-1, 1]
    assert np.max(np.abs(zero_traj.w)) <= 1.0
    assert np.max(np.abs(zero_traj.xi)) == 0.0
    rep = state.xi_bound_check(setup, zero_traj, setup.zero_control())
    assert rep.holds_linear and rep.holds_squared


def test_xi_bound_under_forcing(setup, opts):
    """Push |w| past 1 and check the a-priori constraint-force estimate;
    M_u = 2 separates the two right-hand-side variants."""
    s = dataclasses.replace(setup,
                            params=physics.PhysicsParams(nu=0.5, M_u=2.0, M_w=1.0))
    u = 4.0 * np.ones((s.n, s.grid.n_nodes))
    traj = state.solve_state(s, u, opts)
    assert np.max(np.abs(traj.w[1:])) > 1.0
    rep = state.xi_bound_check(s, traj, u)
    assert rep.rows[5].rhs_linear != rep.rows[5].rhs_squared
    assert rep.holds_linear or rep.holds_squared


def test_xi_stable_as_delta_halves(setup, opts):
    u = 8.0 * np.ones((setup.n, setup.grid.n_nodes))
    overshoots, xi_max = [], []
    for delta in (0.25, 0.125, 0.0625):
        s = setup.with_regularization(setup.flux.epsilon, delta)
        t = state.solve_state(s, u, opts)
        overshoots.append(float(np.max(np.maximum(np.abs(t.w[1:]) - 1.0, 0.0))))
        xi_max.append(float(np.max(np.abs(t.xi))))
    assert overshoots[1] < overshoots[0] and overshoots[2] < overshoots[1]
    for a, b in zip(xi_max, xi_max[1:]):
        assert 1.0 / 3.0 <= b / a <= 3.0


def test_hessian_diagonal_lower_bound(setup, zero_traj):
    lb = (1.0 / setup.tau - setup.reaction.C_g)
    for i in (1, setup.n):
        sys_ = state.step_system(setup, zero_traj.w[i])
        assert np.all(sys_.diag >= setup.grid.mass * lb - 1e-12)
        assert np.array_equal(sys_.lower, sys_.upper)


def test_minimizer_optimality(setup, zero_traj):
    rng = npr(2)
    w1 = zero_traj.w[1]
    u0 = np.zeros(setup.grid.n_nodes)
    base = state.step_energy(setup, zero_traj.w[0], u0, w1)
    for _ in range(100):
        phi = rng.standard_normal(w1.shape)
        trial = state.step_energy(setup, zero_traj.w[0], u0, w1 + 1e-4 * phi)
        assert trial >= base - 1e-12


def test_variational_inequality(setup, zero_traj):
    """Minimizer characterization: the convex-splitting inequality holds
    against random comparison fields."""
    rng = npr(11)
    g = setup.grid
    count = 0
    for i in range(1, setup.n + 1):
        wi, wp = zero_traj.w[i], zero_traj.w[i - 1]
        gi = physics.g_eval(setup.reaction, wi)
        psi_w = _psi(setup, wi)
        for _ in range(3):
            if count >= 50:
                return
            z = wi + 0.5 * rng.standard_normal(wi.shape)
            val = (inner_product(g, (wi - wp) / setup.tau, wi - z)
                   + inner_product(g, gi, wi - z)
                   + psi_w - _psi(setup, z))
            assert val <= 1e-8
            count += 1


def test_determinism(setup, opts):
    rng = npr(5)
    u = 0.5 * rng.standard_normal((setup.n, setup.grid.n_nodes))
    a = state.solve_state(setup, u, opts)
    b = state.solve_state(setup, u, opts)
    assert np.array_equal(a.w, b.w)
    assert np.array_equal(a.xi, b.xi)
    assert np.array_equal(a.flux_edges, b.flux_edges)


def test_residual_floor_shape(setup):
    f0 = state.residual_floor(setup)
    assert np.isfinite(f0) and f0 > 0
    tighter = setup.with_regularization(0.05, setup.constraint.delta)
    assert state.residual_floor(tighter) > f0     # scales like f''(0) ~ 1/eps
    s_abs = dataclasses.replace(setup, flux=physics.FluxRegularization("abs", 0.0))
    assert state.residual_floor(s_abs) == np.inf


def test_solver_refuses_invalid_setup(setup, opts):
    bad = dataclasses.replace(setup, n=10, w_ad=setup.w_ad[:10])
    with pytest.raises(ConfigurationError, match="A5"):
        state.solve_state(bad, bad.zero_control(), opts)


def test_step_options_validation():
    with pytest.raises(ConfigurationError):
        state.StepOptions(newton_tol=0.0)
    with pytest.raises(ConfigurationError):
        state.StepOptions(max_newton=0)
    with pytest.raises(ConfigurationError):
        state.StepOptions(backtrack=1.0)

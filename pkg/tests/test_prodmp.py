"""Decoder core: basis precomputation, decoding, fitting."""

import numpy as np
import pytest

from mpdistill.prodmp import (
    BasisTable,
    BoundaryCondition,
    ProDMPConfig,
    ProDMPParams,
    Trajectory,
    boundary_coefficients,
    decode,
    decode_linear_map,
    fit_params,
    normalized_forcing,
    precompute_basis,
)


@pytest.fixture(scope="module")
def cfg():
    return ProDMPConfig(num_basis=8, alpha=25.0, tau=1.0, dof=1, grid_points=1000)


@pytest.fixture(scope="module")
def table(cfg):
    return precompute_basis(cfg)


def rk4_oracle(cfg, W, G, dt=1e-4):
    """Independent integration of tau^2 y'' = alpha(beta(g-y) - tau y') + f.

    Straight-line RK4 on the second-order system, with the forcing
    recomputed from the basis definitions (not the precomputed tables).
    """
    omega = cfg.omega
    steps = int(round(cfg.tau / dt))
    half_times = np.arange(2 * steps + 1) * (dt / 2)
    fvals = normalized_forcing(cfg, half_times) @ W.T
    n = W.shape[0]
    y = np.zeros(n)
    v = np.zeros(n)
    ys = np.empty((steps + 1, n))
    vs = np.empty((steps + 1, n))
    ys[0], vs[0] = y, v

    def acc(yv, vv, f):
        return omega**2 * (G - yv) - 2 * omega * vv + f

    for i in range(steps):
        f0, fh, f1 = fvals[2 * i], fvals[2 * i + 1], fvals[2 * i + 2]
        k1y, k1v = v, acc(y, v, f0)
        k2y, k2v = v + 0.5 * dt * k1v, acc(y + 0.5 * dt * k1y, v + 0.5 * dt * k1v, fh)
        k3y, k3v = v + 0.5 * dt * k2v, acc(y + 0.5 * dt * k2y, v + 0.5 * dt * k2v, fh)
        k4y, k4v = v + dt * k3v, acc(y + dt * k3y, v + dt * k3v, f1)
        y = y + dt / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
        v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        ys[i + 1], vs[i + 1] = y, v
    return ys, vs


class TestConfig:
    def test_defaults(self):
        cfg = ProDMPConfig()
        assert cfg.beta == cfg.alpha / 4
        assert cfg.omega == cfg.alpha / (2 * cfg.tau)

    @pytest.mark.parametrize(
        "kw",
        [dict(num_basis=0), dict(alpha=-1.0), dict(tau=0.0), dict(grid_points=50)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ProDMPConfig(**kw)

    def test_non_critical_damping_rejected(self):
        cfg = ProDMPConfig(beta=5.0, alpha=25.0)
        with pytest.raises(ValueError, match="critical damping"):
            precompute_basis(cfg)


class TestPrecompute:
    def test_starts_at_rest(self, table):
        # Particular solutions are convolutions from zero initial state.
        assert np.all(table.phi[0] == 0.0)
        assert np.all(table.phi_dot[0] == 0.0)

    def test_homogeneous_initial_values(self, table, cfg):
        assert table.y1[0] == 1.0
        assert table.y2[0] == 0.0
        assert table.y1_dot[0] == -cfg.omega
        assert table.y2_dot[0] == 1.0

    def test_goal_column_closed_form(self):
        # omega * tau = 10 for alpha = 20, tau = 1.
        cfg = ProDMPConfig(num_basis=1, alpha=20.0, tau=1.0)
        t = precompute_basis(cfg)
        expected = 1.0 - np.exp(-10.0) * 11.0
        assert t.phi[-1, -1] == pytest.approx(expected, abs=1e-12)

    def test_goal_column_monotone(self, table):
        # Step response of a critically damped system never overshoots.
        assert np.all(np.diff(table.phi[:, -1]) >= 0.0)

    def test_deterministic(self, cfg):
        a = precompute_basis(cfg)
        b = precompute_basis(cfg)
        assert np.array_equal(a.phi, b.phi)
        assert np.array_equal(a.phi_dot, b.phi_dot)

    def test_finite(self, table):
        for arr in (table.phi, table.phi_dot, table.y1, table.y2):
            assert np.all(np.isfinite(arr))

    def test_grid_too_coarse(self):
        with pytest.raises(ValueError, match="coarse"):
            precompute_basis(ProDMPConfig(num_basis=60, grid_points=100))

    def test_immutable(self, table):
        with pytest.raises(ValueError):
            table.phi[0, 0] = 1.0


class TestBoundaryCoefficients:
    def test_zero(self, table):
        c1, c2 = boundary_coefficients(BoundaryCondition([0.0], [0.0]), table)
        assert c1[0] == 0.0 and c2[0] == 0.0

    def test_position_only(self):
        # omega = 2 for alpha = 4, tau = 1; c2 = y0_dot + omega * y0 = 2.
        t = precompute_basis(ProDMPConfig(num_basis=2, alpha=4.0, tau=1.0))
        c1, c2 = boundary_coefficients(BoundaryCondition([1.0], [0.0]), t)
        assert c1[0] == pytest.approx(1.0)
        assert c2[0] == pytest.approx(2.0)

    def test_velocity_only(self, table):
        c1, c2 = boundary_coefficients(BoundaryCondition([0.0], [3.0]), table)
        assert c1[0] == 0.0
        assert c2[0] == pytest.approx(3.0)


class TestDecode:
    def test_zero_theta_zero_bc(self, cfg, table):
        traj = decode(ProDMPParams.zeros(cfg), BoundaryCondition([0.0], [0.0]),
                      table, np.linspace(0, 1, 11))
        assert np.allclose(traj.positions, 0.0)
        assert np.allclose(traj.velocities, 0.0)

    def test_boundary_exactness(self, cfg, table):
        rng = np.random.default_rng(0)
        for _ in range(50):
            theta = ProDMPParams(rng.standard_normal((1, cfg.num_basis + 1)))
            bc = BoundaryCondition(rng.standard_normal(1), rng.standard_normal(1))
            traj = decode(theta, bc, table, np.array([0.0, 0.5, 1.0]))
            assert abs(traj.positions[0, 0] - bc.y0[0]) <= 1e-9
            assert abs(traj.velocities[0, 0] - bc.y0_dot[0]) <= 1e-6

    def test_matches_rk4(self, cfg, table):
        rng = np.random.default_rng(0)
        n = 10
        W = rng.standard_normal((n, cfg.num_basis))
        G = rng.standard_normal(n)
        ys, _ = rk4_oracle(cfg, W, G)
        q_idx = np.arange(0, 10001, 50)
        q_times = q_idx * 1e-4
        bc = BoundaryCondition([0.0], [0.0])
        for j in range(n):
            theta = ProDMPParams(np.r_[W[j], G[j]][None, :])
            traj = decode(theta, bc, table, q_times)
            rms = np.sqrt(np.mean((traj.positions[:, 0] - ys[q_idx, j]) ** 2))
            assert rms <= 1e-4

    def test_query_outside_range(self, cfg, table):
        theta = ProDMPParams.zeros(cfg)
        bc = BoundaryCondition([0.0], [0.0])
        with pytest.raises(ValueError, match="outside"):
            decode(theta, bc, table, np.array([0.0, 1.5]))

    def test_goal_convergence(self):
        # With no forcing and omega*tau >= 10 the tail reaches the goal.
        rng = np.random.default_rng(1)
        for alpha in (20.0, 30.0, 40.0):
            cfg = ProDMPConfig(num_basis=3, alpha=alpha, tau=1.0)
            t = precompute_basis(cfg)
            for _ in range(10):
                y0, y0d, g = rng.standard_normal(3)
                theta = ProDMPParams(np.r_[np.zeros(3), g][None, :])
                traj = decode(theta, BoundaryCondition([y0], [y0d]), t, np.array([0.0, cfg.tau]))
                assert abs(traj.positions[-1, 0] - g) <= 0.02 * abs(y0 - g) + 1e-3

    def test_multi_dof_independent(self, cfg):
        cfg2 = ProDMPConfig(num_basis=cfg.num_basis, alpha=cfg.alpha, tau=cfg.tau, dof=2)
        t2 = precompute_basis(cfg2)
        rng = np.random.default_rng(3)
        vals = rng.standard_normal((2, cfg.num_basis + 1))
        bc = BoundaryCondition(rng.standard_normal(2), rng.standard_normal(2))
        times = np.linspace(0, 1, 7)
        both = decode(ProDMPParams(vals), bc, t2, times)
        for d in range(2):
            t1 = precompute_basis(ProDMPConfig(num_basis=cfg.num_basis, alpha=cfg.alpha, tau=cfg.tau, dof=1))
            one = decode(ProDMPParams(vals[d : d + 1]), BoundaryCondition(bc.y0[d : d + 1], bc.y0_dot[d : d + 1]), t1, times)
            assert np.allclose(both.positions[:, d], one.positions[:, 0], atol=1e-14)


class TestLinearMap:
    def test_unit_vectors(self, cfg, table):
        times = np.linspace(0, 1, 9)
        L = decode_linear_map(table, times, dof=1)
        bc = BoundaryCondition([0.0], [0.0])
        k1 = cfg.num_basis + 1
        for i in range(k1):
            e = np.zeros(k1)
            e[i] = 1.0
            traj = decode(ProDMPParams(e[None, :]), bc, table, times)
            stacked = np.concatenate([traj.positions.reshape(-1), traj.velocities.reshape(-1)])
            assert np.allclose(L[:, i], stacked, atol=1e-13)

    def test_superposition(self, cfg, table):
        rng = np.random.default_rng(2)
        times = np.linspace(0, 1, 15)
        bc = BoundaryCondition([0.0], [0.0])
        for _ in range(20):
            t1v = rng.standard_normal((1, cfg.num_basis + 1))
            t2v = rng.standard_normal((1, cfg.num_basis + 1))
            a, b = rng.standard_normal(2)
            combo = decode(ProDMPParams(a * t1v + b * t2v), bc, table, times)
            d1 = decode(ProDMPParams(t1v), bc, table, times)
            d2 = decode(ProDMPParams(t2v), bc, table, times)
            expect = a * d1.positions + b * d2.positions
            scale = np.abs(expect).max() + 1.0
            assert np.abs(combo.positions - expect).max() / scale <= 1e-12

    def test_matches_decode(self, cfg, table):
        rng = np.random.default_rng(7)
        times = np.linspace(0, 1, 12)
        L = decode_linear_map(table, times, dof=1)
        bc = BoundaryCondition([0.0], [0.0])
        for _ in range(20):
            theta = ProDMPParams(rng.standard_normal((1, cfg.num_basis + 1)))
            traj = decode(theta, bc, table, times)
            stacked = np.concatenate([traj.positions.reshape(-1), traj.velocities.reshape(-1)])
            via_map = L @ theta.flat
            scale = np.abs(stacked).max() + 1e-30
            assert np.abs(via_map - stacked).max() / scale <= 1e-12

    def test_affine_offset(self, cfg, table):
        # decode(theta, bc) = decode(0, bc) + L @ theta for nonzero bc.
        rng = np.random.default_rng(8)
        times = np.linspace(0, 1, 12)
        L = decode_linear_map(table, times, dof=1)
        bc = BoundaryCondition([0.7], [-0.3])
        base = decode(ProDMPParams.zeros(cfg), bc, table, times)
        theta = ProDMPParams(rng.standard_normal((1, cfg.num_basis + 1)))
        full = decode(theta, bc, table, times)
        stacked = np.concatenate(
            [(full.positions - base.positions).reshape(-1),
             (full.velocities - base.velocities).reshape(-1)]
        )
        assert np.allclose(stacked, L @ theta.flat, atol=1e-12)


class TestFit:
    def test_roundtrip(self):
        cfg = ProDMPConfig(num_basis=10, alpha=25.0, tau=1.0, dof=2)
        table = precompute_basis(cfg)
        rng = np.random.default_rng(4)
        times = table.time_grid[np.linspace(0, cfg.grid_points - 1, 22).astype(int)]
        for _ in range(10):
            theta = ProDMPParams(rng.standard_normal((2, 11)))
            bc = BoundaryCondition(rng.standard_normal(2), rng.standard_normal(2))
            traj = decode(theta, bc, table, times)
            fit = fit_params(traj, bc, table)
            rel = np.abs(fit.params.flat - theta.flat).max() / np.abs(theta.flat).max()
            assert rel <= 1e-8

    def test_constant_trajectory(self, cfg, table):
        times = np.linspace(0, 1, 24)
        traj = Trajectory(times=times, positions=np.full((24, 1), 0.4),
                          velocities=np.zeros((24, 1)))
        bc = BoundaryCondition([0.4], [0.0])
        fit = fit_params(traj, bc, table)
        rebuilt = decode(fit.params, bc, table, times)
        assert np.abs(rebuilt.positions - 0.4).max() <= 1e-6
        assert fit.residual_rms <= 1e-8

    def test_too_few_samples(self, cfg, table):
        times = np.linspace(0, 1, cfg.num_basis)  # fewer than K+1
        traj = Trajectory(times=times, positions=np.zeros((cfg.num_basis, 1)),
                          velocities=np.zeros((cfg.num_basis, 1)))
        with pytest.raises(ValueError, match="at least"):
            fit_params(traj, BoundaryCondition([0.0], [0.0]), table)

    def test_residual_reported(self, cfg, table):
        rng = np.random.default_rng(5)
        times = np.linspace(0, 1, 30)
        pos = np.cumsum(rng.standard_normal((30, 1)), axis=0) * 0.05
        traj = Trajectory(times=times, positions=pos, velocities=np.zeros((30, 1)))
        fit = fit_params(traj, BoundaryCondition(pos[0], [0.0]), table)
        rebuilt = decode(fit.params, BoundaryCondition(pos[0], [0.0]), table, times)
        rms = np.sqrt(np.mean((rebuilt.positions - pos) ** 2))
        assert fit.residual_rms == pytest.approx(rms, rel=1e-9)


class TestSerialization:
    def test_roundtrip_bits(self, table, tmp_path):
        path = tmp_path / "basis.bin"
        table.save(path)
        loaded = BasisTable.load(path)
        assert loaded.cfg == table.cfg
        for name in ("time_grid", "phi", "phi_dot", "y1", "y2", "y1_dot", "y2_dot"):
            assert np.array_equal(getattr(loaded, name), getattr(table, name))

    def test_format_check(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTMAGIC" + b"\0" * 64)
        with pytest.raises(ValueError, match="magic"):
            BasisTable.load(path)

"""Integrator, closed-loop run, and metric tests."""

import math

import numpy as np
import pytest

from nashseek.control import GainSet, ObserverSet, SeekerState, output_feedback_rhs, state_feedback_rhs
from nashseek.errors import (
    ConfigInvalid,
    Diverged,
    DimensionMismatch,
    EmptyWindow,
    NonPositiveError,
    NotStronglyConnected,
)
from nashseek.game import Game, extended_pseudo_gradient
from nashseek.graph import Digraph, estimation_block_matrix
from nashseek.scenarios import (
    build_turbine_market,
    build_vehicle_formation,
    turbine_nash_oracle,
    vehicle_nash_oracle,
)
from nashseek.sim import (
    InitialConditions,
    Plant,
    SimConfig,
    Trajectory,
    _Layout,
    _make_rhs,
    equilibrium_residual,
    fit_exponential_rate,
    mid_decay_window,
    post_transient_observer_error,
    rk4_step,
    run,
    settle_time,
    write_trajectory_csv,
)
from nashseek.verify import rk4_halving_factors


def identity_game(n=2, m=1):
    return Game(n, m, lambda i, x_i, x_o: np.asarray(x_i, dtype=float))


def two_cycle():
    return Digraph(np.array([[0.0, 1.0], [2.0, 0.0]]))


def synthetic_trajectory(times, errors):
    times = np.asarray(times, dtype=float)
    errors = np.asarray(errors, dtype=float)
    decisions = np.zeros((len(times), 1, 1))
    return Trajectory(times=times, decisions=decisions,
                      estimate_disagreement=np.zeros(len(times)),
                      error_norms=errors)


class TestRK4:
    def test_constant_rhs(self):
        out = rk4_step(lambda s, t: np.zeros_like(s), np.array([5.0]), 0.0, 0.1)
        assert out[0] == 5.0

    def test_linear_decay_accuracy(self):
        out = rk4_step(lambda s, t: -s, np.array([1.0]), 0.0, 0.1)
        assert abs(out[0] - math.exp(-0.1)) < 1e-7

    def test_order_four_halving_factor(self):
        factors = rk4_halving_factors()
        assert all(12.0 <= f <= 20.0 for f in factors)

    def test_divergence_detected(self):
        with np.errstate(over="ignore"), pytest.raises(Diverged):
            rk4_step(lambda s, t: s * 1e308, np.array([1.0]), 0.0, 1.0)


class TestSimConfigValidation:
    def test_rejects_bad_dt(self):
        with pytest.raises(ConfigInvalid):
            SimConfig(dt=0.0, horizon=1.0)

    def test_rejects_short_horizon(self):
        with pytest.raises(ConfigInvalid):
            SimConfig(dt=0.1, horizon=0.01)

    def test_rejects_unknown_mode(self):
        with pytest.raises(ConfigInvalid):
            SimConfig(dt=0.1, horizon=1.0, mode="hybrid")


class TestRunValidation:
    def test_output_mode_requires_observer(self):
        game = identity_game()
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        cfg = SimConfig(dt=1e-3, horizon=0.1, mode="output")
        with pytest.raises(ConfigInvalid):
            run(game, plants, two_cycle(), gains, None, cfg)

    def test_output_mode_enforces_dt_bound(self):
        game = identity_game()
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        obs = ObserverSet((1.0,), 0.02)
        cfg = SimConfig(dt=3e-3, horizon=0.1, mode="output")
        with pytest.raises(ConfigInvalid):
            run(game, plants, two_cycle(), gains, obs, cfg)

    def test_requires_strong_connectivity(self):
        game = identity_game()
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        cfg = SimConfig(dt=1e-3, horizon=0.1)
        one_way = Digraph(np.array([[0.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(NotStronglyConnected):
            run(game, plants, one_way, gains, None, cfg)

    def test_mixed_plant_orders_rejected(self):
        game = identity_game()
        plants = [Plant(1, 1), Plant(2, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        cfg = SimConfig(dt=1e-3, horizon=0.1)
        with pytest.raises(DimensionMismatch):
            run(game, plants, two_cycle(), gains, None, cfg)

    def test_player_count_mismatch_rejected(self):
        game = identity_game(n=3)
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        cfg = SimConfig(dt=1e-3, horizon=0.1)
        with pytest.raises(DimensionMismatch):
            run(game, plants, two_cycle(), gains, None, cfg)


class TestClosedLoopRuns:
    def test_zero_gains_freeze_the_plant(self):
        game = identity_game()
        plants = [Plant(2, 1), Plant(2, 1)]
        gains = GainSet(2, (0.0,), 1.0, 0.0, 0.0, 0.0, check=False)
        cfg = SimConfig(dt=1e-2, horizon=0.5)
        init = InitialConditions(decisions=np.array([[3.0], [-1.0]]))
        traj = run(game, plants, two_cycle(), gains, None, cfg, init)
        assert np.array_equal(traj.decisions[0], traj.decisions[-1])
        assert all(np.array_equal(traj.decisions[0], d) for d in traj.decisions)

    def test_first_order_players_converge(self):
        game = identity_game()
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        cfg = SimConfig(dt=1e-3, horizon=15.0)
        init = InitialConditions(decisions=np.array([[4.0], [-2.0]]))
        traj = run(game, plants, two_cycle(), gains, None, cfg, init,
                   x_star=np.zeros(2))
        assert np.max(np.abs(traj.final_decisions)) < 1e-3

    def test_first_order_output_mode_runs(self):
        game = identity_game()
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        obs = ObserverSet((1.0,), 0.05)
        cfg = SimConfig(dt=1e-3, horizon=10.0, mode="output")
        traj = run(game, plants, two_cycle(), gains, obs, cfg,
                   InitialConditions(decisions=np.array([[4.0], [-2.0]])),
                   x_star=np.zeros(2))
        assert np.max(np.abs(traj.final_decisions)) < 1e-2
        assert traj.observer_errors is not None

    def test_unstable_gains_diverge(self):
        game = identity_game()
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 1.0, -30.0, 0.0, 0.0, check=False)
        cfg = SimConfig(dt=1e-3, horizon=3.0)
        with pytest.raises(Diverged):
            run(game, plants, two_cycle(), gains, None, cfg,
                InitialConditions(decisions=np.ones((2, 1))))

    def test_determinism_bitwise(self):
        game, plants, g, spec = build_vehicle_formation()
        gains = GainSet(2, (1.0,), 2.0, 3.0, 2.2, 18.0)
        cfg = SimConfig(dt=1e-3, horizon=1.0, seed=7)
        a = run(game, plants, g, gains, None, cfg, x_star=vehicle_nash_oracle(spec))
        b = run(game, plants, g, gains, None, cfg, x_star=vehicle_nash_oracle(spec))
        assert np.array_equal(a.decisions, b.decisions)
        assert np.array_equal(a.error_norms, b.error_norms)
        assert np.array_equal(a.estimate_disagreement, b.estimate_disagreement)

    def test_snapshots_recorded_on_stride(self):
        game = identity_game()
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        cfg = SimConfig(dt=1e-2, horizon=0.2, snapshot_stride=10)
        traj = run(game, plants, two_cycle(), gains, None, cfg,
                   InitialConditions(decisions=np.ones((2, 1))))
        assert len(traj.raw_state_snapshots) == 3  # steps 0, 10, 20
        snap = traj.raw_state_snapshots[0]
        assert snap.plant_states.shape == (1, 2, 1)
        assert len(snap.seekers) == 2
        assert snap.seekers[0].x_hat.shape == (2, 1)

    def test_seeded_box_initial_conditions(self):
        game = identity_game()
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        cfg = SimConfig(dt=1e-2, horizon=0.1, seed=11)
        init = InitialConditions(box=(-3.0, 3.0))
        traj = run(game, plants, two_cycle(), gains, None, cfg, init)
        expected = np.random.default_rng(11).uniform(-3.0, 3.0, size=(2, 1))
        assert np.array_equal(traj.decisions[0], expected)


class TestRhsMatchesPerPlayerLaws:
    """The vectorized closed-loop right-hand side must agree with the
    per-player law functions assembled by hand."""

    def _check(self, mode):
        game, plants, g = build_turbine_market()
        n, n_players, m = 4, 6, 1
        gains = GainSet(4, (3.375, 6.75, 4.5), 2.0, 14.0, 10.0, 40.0)
        obs = ObserverSet((4.0, 6.0, 4.0, 1.0), 0.01) if mode == "output" else None
        layout = _Layout(n, n_players, m, output_mode=mode == "output")
        rng = np.random.default_rng(13)
        state = rng.standard_normal(layout.size)
        rhs = _make_rhs(game, plants, g, gains, obs, layout)
        derivative = rhs(state, 0.0)

        chain = layout.chain(state)
        x_hat = layout.x_hat(state)
        y = layout.y(state)
        x = chain[0]
        z = layout.z(state)
        d_chain = layout.chain(derivative)
        d_y = layout.y(derivative)
        d_hat = layout.x_hat(derivative)
        d_z = layout.z(derivative)

        grads = extended_pseudo_gradient(game, x.reshape(-1), x_hat.reshape(-1)).reshape(n_players, m)
        for i in range(n_players):
            neighbor = {k: (x_hat[k], x[k]) for k in range(n_players)}
            seeker = SeekerState(y=y[i], x_hat=x_hat[i],
                                 z_chain=None if z is None else z[:, i, :])
            if mode == "state":
                u_i, dy_i, dxh_i = state_feedback_rhs(
                    i, chain[:, i, :], seeker, grads[i], neighbor, gains, g)
            else:
                u_i, dy_i, dz_i, dxh_i = output_feedback_rhs(
                    i, x[i], seeker, grads[i], neighbor, gains, obs, g)
                assert np.allclose(d_z[:, i, :], dz_i, atol=1e-12)
            assert np.allclose(d_chain[-1, i], u_i, atol=1e-12)  # zero drift
            assert np.allclose(d_y[i], dy_i, atol=1e-12)
            assert np.allclose(d_hat[i], dxh_i, atol=1e-12)
            for level in range(n - 1):
                assert np.array_equal(d_chain[level, i], chain[level + 1, i])

    def test_state_mode(self):
        self._check("state")

    def test_output_mode(self):
        self._check("output")

    def test_estimate_rate_matches_kronecker_form(self):
        # dual route: tensor difference form vs the stacked block matrices
        from nashseek.control import stacked_estimate_rate
        from nashseek.verify import random_strongly_connected_digraph

        rng = np.random.default_rng(14)
        for _ in range(5):
            n = int(rng.integers(2, 6))
            m = int(rng.integers(1, 3))
            g = random_strongly_connected_digraph(rng, n)
            x_hat = rng.standard_normal((n, n, m))
            x = rng.standard_normal((n, m))
            alpha3 = 7.0
            tensor_rate = stacked_estimate_rate(x_hat, x, g, alpha3)
            l_ext, mm = estimation_block_matrix(g)
            flat_hat = x_hat.reshape(n * n, m)
            ones_x = np.tile(x, (n, 1))
            matrix_rate = -alpha3 * (l_ext @ flat_hat + mm @ (flat_hat - ones_x))
            assert np.allclose(tensor_rate.reshape(n * n, m), matrix_rate, atol=1e-12)


class TestEquilibriumResidual:
    def test_vehicle_equilibrium_annihilates_rhs(self):
        game, plants, g, spec = build_vehicle_formation()
        gains = GainSet(2, (1.0,), 2.0, 3.0, 2.2, 18.0)
        assert equilibrium_residual(game, plants, g, gains, vehicle_nash_oracle(spec)) < 1e-9

    def test_turbine_equilibrium_annihilates_rhs(self):
        game, plants, g = build_turbine_market()
        gains = GainSet(4, (3.375, 6.75, 4.5), 2.0, 14.0, 10.0, 40.0)
        assert equilibrium_residual(game, plants, g, gains, turbine_nash_oracle()) < 1e-9

    def test_zero_drift_residual_below_1e12(self):
        game, plants, g = build_turbine_market()
        gains = GainSet(4, (3.375, 6.75, 4.5), 2.0, 14.0, 10.0, 40.0)
        assert equilibrium_residual(game, plants, g, gains, turbine_nash_oracle()) < 1e-12

    def test_perturbed_point_is_not_an_equilibrium(self):
        game, plants, g = build_turbine_market()
        gains = GainSet(4, (3.375, 6.75, 4.5), 2.0, 14.0, 10.0, 40.0)
        x = turbine_nash_oracle().copy()
        x[0] += 0.1
        assert equilibrium_residual(game, plants, g, gains, x) > 1e-4


class TestSettleTime:
    def test_already_settled(self):
        traj = synthetic_trajectory([0.0, 1.0, 2.0], [0.0, 0.0, 0.0])
        assert settle_time(traj, np.zeros(1), 0.01) == 0.0

    def test_exponential_crossing(self):
        times = np.arange(0.0, 8.0, 0.01)
        decisions = (1.0 + np.exp(-times))[:, None, None]
        traj = Trajectory(times=times, decisions=decisions,
                          estimate_disagreement=np.zeros(len(times)))
        t = settle_time(traj, np.array([1.0]), 0.01)
        assert abs(t - math.log(100.0)) < 0.02

    def test_diverging_returns_none(self):
        times = np.arange(0.0, 5.0, 0.1)
        decisions = np.exp(times)[:, None, None]
        traj = Trajectory(times=times, decisions=decisions,
                          estimate_disagreement=np.zeros(len(times)))
        assert settle_time(traj, np.array([0.0]), 0.01) is None


class TestExponentialFit:
    def test_pure_exponential(self):
        times = np.arange(0.0, 5.0, 0.01)
        traj = synthetic_trajectory(times, np.exp(-2.0 * times))
        lam, r2 = fit_exponential_rate(traj, (0.0, 5.0))
        assert abs(lam - 2.0) < 1e-6
        assert r2 > 1.0 - 1e-9

    def test_perturbed_exponential(self):
        times = np.arange(0.0, 5.0, 0.01)
        errors = np.exp(-2.0 * times) * (1.0 + 0.01 * np.sin(10.0 * times))
        traj = synthetic_trajectory(times, errors)
        lam, r2 = fit_exponential_rate(traj, (0.0, 5.0))
        assert 1.9 <= lam <= 2.1
        assert r2 > 0.99

    def test_empty_window(self):
        traj = synthetic_trajectory([0.0, 1.0], [1.0, 0.5])
        with pytest.raises(EmptyWindow):
            fit_exponential_rate(traj, (5.0, 6.0))

    def test_non_positive_errors(self):
        traj = synthetic_trajectory([0.0, 1.0, 2.0], [1.0, 0.0, 0.5])
        with pytest.raises(NonPositiveError):
            fit_exponential_rate(traj, (0.0, 2.0))

    def test_mid_decay_window_on_exponential(self):
        times = np.arange(0.0, 10.0, 0.001)
        traj = synthetic_trajectory(times, np.exp(-times))
        t_lo, t_hi = mid_decay_window(traj)
        assert abs(t_lo - (-math.log(0.9))) < 0.01
        assert abs(t_hi - (-math.log(0.1))) < 0.01


class TestTrajectoryExport:
    def test_csv_header_and_roundtrip(self, tmp_path):
        game = identity_game()
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        cfg = SimConfig(dt=1e-2, horizon=0.1)
        traj = run(game, plants, two_cycle(), gains, None, cfg,
                   InitialConditions(decisions=np.array([[1.0], [2.0]])),
                   x_star=np.zeros(2))
        path = tmp_path / "trajectory.csv"
        write_trajectory_csv(traj, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x_1_1,x_2_1,err_norm,est_disagreement"
        first = lines[1].split(",")
        assert float(first[0]) == 0.0
        assert float(first[1]) == 1.0 and float(first[2]) == 2.0

    def test_csv_bytes_deterministic(self, tmp_path):
        game = identity_game()
        plants = [Plant(1, 1), Plant(1, 1)]
        gains = GainSet(1, (), 2.0, 1.8, 1.5, 5.0)
        cfg = SimConfig(dt=1e-2, horizon=0.2, seed=3)
        paths = []
        for tag in ("a", "b"):
            traj = run(game, plants, two_cycle(), gains, None, cfg, x_star=np.zeros(2))
            p = tmp_path / f"{tag}.csv"
            write_trajectory_csv(traj, p)
            paths.append(p.read_bytes())
        assert paths[0] == paths[1]


class TestObserverErrorSeries:
    def test_post_transient_error_none_in_state_mode(self):
        traj = synthetic_trajectory([0.0, 1.0], [1.0, 0.5])
        assert post_transient_observer_error(traj) is None

    def test_post_transient_error_skips_initial_fraction(self):
        times = np.arange(0.0, 10.0, 1.0)
        traj = Trajectory(times=times, decisions=np.zeros((10, 1, 1)),
                          estimate_disagreement=np.zeros(10),
                          observer_errors=np.array([9.0, 8.0, 0.5, 0.4, 0.3,
                                                    0.2, 0.1, 0.1, 0.1, 0.1]))
        assert post_transient_observer_error(traj, fraction=0.2) == 0.5

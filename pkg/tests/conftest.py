"""Shared fixtures: the four reference closed-loop runs, executed once per session."""

import time

import pytest

from nashseek import sim
from nashseek.config import build_run_setup, default_config


def _timed_run(scenario, algo, overrides=None):
    cfg = default_config(scenario, algo)
    for path, value in (overrides or {}).items():
        block, key = path.split(".")
        cfg[block][key] = value
    setup = build_run_setup(cfg)
    start = time.perf_counter()
    trajectory = sim.run(setup.game, setup.plants, setup.graph, setup.gains,
                         setup.observer, setup.sim_config, setup.init,
                         x_star=setup.x_star)
    wall = time.perf_counter() - start
    return setup, trajectory, wall


@pytest.fixture(scope="session")
def vehicles_state_run():
    return _timed_run("vehicles", "state")


@pytest.fixture(scope="session")
def vehicles_output_run():
    return _timed_run("vehicles", "output")


@pytest.fixture(scope="session")
def turbines_state_run():
    return _timed_run("turbines", "state")


@pytest.fixture(scope="session")
def turbines_output_run():
    return _timed_run("turbines", "output")


@pytest.fixture(scope="session")
def mu_refinement_runs():
    """One state-feedback reference plus output-feedback runs over decreasing mu.

    All four runs share the horizon, step size, seed and recording grid, so
    trajectories are directly comparable sample by sample.
    """
    horizon = 12.0
    _, state_traj, _ = _timed_run("vehicles", "state", {"sim.horizon": horizon})
    output = {}
    for mu in (0.04, 0.02, 0.01):
        _, traj, _ = _timed_run("vehicles", "output",
                                {"sim.horizon": horizon, "observer.mu": mu})
        output[mu] = traj
    return state_traj, output

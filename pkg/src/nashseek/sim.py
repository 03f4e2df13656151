"""Fixed-step integration of the closed-loop seeking dynamics and run metrics.

The global state is one flat vector laid out as

    [plant chains (n, N, m) | observer chains (n, N, m), output mode only |
     auxiliary y (N, m) | estimate tensor (N, N, m)]

and advanced with classical RK4.  The controller side of the right-hand side
is assembled from the stacked forms in :mod:`nashseek.control`; plant drifts
are evaluated per player and are never visible to the controller terms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import control
from .control import GainSet, ObserverSet
from .errors import (
    ConfigInvalid,
    Diverged,
    DimensionMismatch,
    EmptyWindow,
    NonPositiveError,
    NotStronglyConnected,
)
from .game import Game, gradient_matrix
from .graph import Digraph, is_strongly_connected

STATE_MAGNITUDE_GUARD = 1e12

MODE_STATE = "state"
MODE_OUTPUT = "output"


@dataclass(frozen=True)
class Plant:
    """One player's n-th order integrator chain with a drift on the top derivative.

    drift(chain, w) receives the (n, m) matrix of the player's own chain
    (decision first, highest derivative last) and the hidden parameter w; a
    None drift means the chain is a pure integrator.  Controllers never see
    this object.
    """

    order_n: int
    dim_m: int
    drift: Optional[Callable[[np.ndarray, object], np.ndarray]] = None
    w: object = None


@dataclass
class ClosedLoopState:
    """Materialized snapshot of the full closed loop at one instant."""

    t: float
    plant_states: np.ndarray           # (n, N, m)
    seekers: list                      # one SeekerState per player


@dataclass(frozen=True)
class SimConfig:
    """Integration settings; dt and horizon in seconds."""

    dt: float
    horizon: float
    mode: str = MODE_STATE
    record_stride: int = 10
    seed: int = 0
    snapshot_stride: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigInvalid(f"dt must be positive, got {self.dt}")
        if self.horizon < self.dt:
            raise ConfigInvalid(f"horizon {self.horizon} shorter than one step {self.dt}")
        if self.mode not in (MODE_STATE, MODE_OUTPUT):
            raise ConfigInvalid(f"mode must be '{MODE_STATE}' or '{MODE_OUTPUT}', got {self.mode!r}")
        if self.record_stride < 1:
            raise ConfigInvalid("record_stride must be >= 1")
        if self.snapshot_stride < 0:
            raise ConfigInvalid("snapshot_stride must be >= 0")


@dataclass(frozen=True)
class InitialConditions:
    """Starting point of a run; unspecified pieces use the pinned defaults.

    Decisions are drawn uniformly from ``box`` with the run seed unless given
    explicitly; derivative chains start at zero unless overridden; y and the
    estimates start at zero; observers start on the measured output.
    """

    decisions: Optional[np.ndarray] = None
    box: tuple = (-10.0, 10.0)
    derivatives: Optional[np.ndarray] = None


@dataclass
class Trajectory:
    """Recorded samples of one run plus derived convergence series."""

    times: np.ndarray
    decisions: np.ndarray              # (T, N, m)
    estimate_disagreement: np.ndarray  # (T,)
    error_norms: Optional[np.ndarray] = None
    observer_errors: Optional[np.ndarray] = None
    raw_state_snapshots: list = field(default_factory=list)
    diverged: bool = False

    @property
    def final_decisions(self) -> np.ndarray:
        return self.decisions[-1]


def rk4_step(rhs, state: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One classical Runge-Kutta 4 update; raises Diverged on non-finite output."""
    k1 = rhs(state, t)
    k2 = rhs(state + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs(state + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs(state + dt * k3, t + dt)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise Diverged(f"non-finite state after step at t={t:g}")
    return out


class _Layout:
    """Offsets of the flat closed-loop state vector."""

    def __init__(self, n: int, n_players: int, m: int, output_mode: bool):
        self.n = n
        self.N = n_players
        self.m = m
        self.output_mode = output_mode
        block = n * n_players * m
        self.chain_sl = slice(0, block)
        pos = block
        if output_mode:
            self.z_sl = slice(pos, pos + block)
            pos += block
        else:
            self.z_sl = None
        self.y_sl = slice(pos, pos + n_players * m)
        pos += n_players * m
        self.hat_sl = slice(pos, pos + n_players * n_players * m)
        pos += n_players * n_players * m
        self.size = pos

    def chain(self, s):
        return s[self.chain_sl].reshape(self.n, self.N, self.m)

    def z(self, s):
        return s[self.z_sl].reshape(self.n, self.N, self.m) if self.output_mode else None

    def y(self, s):
        return s[self.y_sl].reshape(self.N, self.m)

    def x_hat(self, s):
        return s[self.hat_sl].reshape(self.N, self.N, self.m)


def _validate_setup(game: Game, plants: Sequence[Plant], g: Digraph,
                    gains: GainSet, obs: Optional[ObserverSet], mode: str):
    n_players = g.n_nodes
    if game.n_players != n_players or len(plants) != n_players:
        raise DimensionMismatch(
            f"graph has {n_players} nodes but game has {game.n_players} players "
            f"and {len(plants)} plants were supplied"
        )
    n = plants[0].order_n
    m = plants[0].dim_m
    for p in plants:
        if p.order_n != n or p.dim_m != m:
            raise DimensionMismatch("all plants must share the same order and decision dimension")
    if m != game.decision_dim:
        raise DimensionMismatch(f"plant dimension {m} != game decision dimension {game.decision_dim}")
    if gains.order_n != n:
        raise DimensionMismatch(f"gain set is for order {gains.order_n}, plants have order {n}")
    if mode == MODE_OUTPUT and obs is None:
        raise ConfigInvalid("output mode requires an observer parameter set")
    return n, n_players, m


def _make_rhs(game: Game, plants: Sequence[Plant], g: Digraph, gains: GainSet,
              obs: Optional[ObserverSet], layout: _Layout):
    """Closed-loop right-hand side over the flat state vector."""
    n, m = layout.n, layout.m
    n_players = layout.N
    idx = np.arange(n_players)
    drift_entries = [(i, p.drift, p.w) for i, p in enumerate(plants) if p.drift is not None]
    w_u, w_y, a1s = control.feedback_weights(gains)
    a1, a2, a3 = gains.alpha1, gains.alpha2, gains.alpha3
    w_z = control.observer_weights(gains, obs) if layout.output_mode else None
    weights = g.weights

    def rhs(s, t):
        out = np.empty_like(s)
        chain = layout.chain(s)
        y = layout.y(s)
        x_hat = layout.x_hat(s)
        x = chain[0]

        profiles = x_hat.copy()
        profiles[idx, idx, :] = x
        grads = gradient_matrix(game, profiles)

        levels = layout.z(s)[1:] if layout.output_mode else chain[1:]
        u = -a1 * grads - a2 * y
        if w_u.size:
            u = u - np.tensordot(w_u, levels, axes=1)
        dy = a1s * grads
        if w_y.size:
            dy = dy + np.tensordot(w_y, levels, axes=1)

        dchain = out[layout.chain_sl].reshape(n, n_players, m)
        if n > 1:
            dchain[:-1] = chain[1:]
        dchain[-1] = u
        for i, drift, w in drift_entries:
            dchain[-1, i] += drift(chain[:, i, :], w)

        if layout.output_mode:
            z = layout.z(s)
            innovation = x - z[0]
            dz = out[layout.z_sl].reshape(n, n_players, m)
            if n > 1:
                dz[:-1] = z[1:] + w_z[:-1, None, None] * innovation[None, :, :]
            dz[-1] = w_z[-1] * innovation

        out[layout.y_sl] = dy.ravel()

        diffs = x_hat[:, None, :, :] - x_hat[None, :, :, :]
        consensus = np.einsum("ik,ikjm->ijm", weights, diffs)
        anchor = weights[:, :, None] * (x_hat - x[None, :, :])
        out[layout.hat_sl] = (-a3 * (consensus + anchor)).ravel()
        return out

    return rhs


def run(game: Game, plants: Sequence[Plant], g: Digraph, gains: GainSet,
        obs: Optional[ObserverSet], cfg: SimConfig,
        init: Optional[InitialConditions] = None,
        x_star: Optional[np.ndarray] = None) -> Trajectory:
    """Integrate the full closed loop and record the trajectory.

    x_star, when supplied, must come from an independent equilibrium solver;
    it is used only to fill the recorded error norms.
    """
    n, n_players, m = _validate_setup(game, plants, g, gains, obs, cfg.mode)
    if not is_strongly_connected(g):
        raise NotStronglyConnected("communication digraph must be strongly connected")
    output_mode = cfg.mode == MODE_OUTPUT
    if output_mode and cfg.dt > obs.mu / 10.0 + 1e-15:
        raise ConfigInvalid(
            f"output mode requires dt <= mu/10 = {obs.mu / 10.0:g}, got dt={cfg.dt:g}"
        )

    init = init or InitialConditions()
    rng = np.random.default_rng(cfg.seed)
    if init.decisions is not None:
        x0 = np.asarray(init.decisions, dtype=float).reshape(n_players, m)
    else:
        lo, hi = init.box
        x0 = rng.uniform(lo, hi, size=(n_players, m))

    layout = _Layout(n, n_players, m, output_mode)
    state = np.zeros(layout.size)
    chain = layout.chain(state)
    chain[0] = x0
    if init.derivatives is not None:
        derivs = np.asarray(init.derivatives, dtype=float)
        if derivs.shape != (n - 1, n_players, m):
            raise ConfigInvalid(f"derivative override must have shape {(n - 1, n_players, m)}")
        chain[1:] = derivs
    if output_mode:
        layout.z(state)[0] = x0  # observer position starts on the measured output

    rhs = _make_rhs(game, plants, g, gains, obs, layout)
    x_star_mat = None if x_star is None else np.asarray(x_star, dtype=float).reshape(n_players, m)

    times = []
    decisions = []
    disagreement = []
    errors = [] if x_star_mat is not None else None
    obs_errors = [] if output_mode else None
    snapshots = []

    def record(k_step, s):
        t = k_step * cfg.dt
        c = layout.chain(s)
        xh = layout.x_hat(s)
        times.append(t)
        decisions.append(c[0].copy())
        disagreement.append(float(np.linalg.norm(xh - c[0][None, :, :])))
        if errors is not None:
            errors.append(float(np.linalg.norm(c[0] - x_star_mat)))
        if obs_errors is not None:
            obs_errors.append(float(np.max(np.abs(layout.z(s)[0] - c[0]))))
        if cfg.snapshot_stride and k_step % cfg.snapshot_stride == 0:
            z = layout.z(s)
            y_now = layout.y(s)
            seekers = [
                control.SeekerState(
                    y=y_now[i].copy(), x_hat=xh[i].copy(),
                    z_chain=None if z is None else z[:, i, :].copy(),
                )
                for i in range(layout.N)
            ]
            snapshots.append(ClosedLoopState(t, c.copy(), seekers))

    steps = round(cfg.horizon / cfg.dt)
    record(0, state)
    for k in range(steps):
        state = rk4_step(rhs, state, k * cfg.dt, cfg.dt)
        if np.max(np.abs(state)) > STATE_MAGNITUDE_GUARD:
            raise Diverged(f"state magnitude exceeded {STATE_MAGNITUDE_GUARD:g} at t={(k + 1) * cfg.dt:g}")
        if (k + 1) % cfg.record_stride == 0 or k + 1 == steps:
            record(k + 1, state)

    return Trajectory(
        times=np.asarray(times),
        decisions=np.asarray(decisions),
        estimate_disagreement=np.asarray(disagreement),
        error_norms=None if errors is None else np.asarray(errors),
        observer_errors=None if obs_errors is None else np.asarray(obs_errors),
        raw_state_snapshots=snapshots,
    )


def equilibrium_residual(game: Game, plants: Sequence[Plant], g: Digraph,
                         gains: GainSet, x_star: np.ndarray) -> float:
    """Infinity norm of the closed-loop right-hand side at the equilibrium tuple.

    The tuple sets all derivative states to zero, the estimates to exact
    consensus on x_star, and y to f(x_star, 0, ..., 0, w) / alpha2, which
    should annihilate the state-feedback closed loop when x_star is the
    equilibrium profile.
    """
    n, n_players, m = _validate_setup(game, plants, g, gains, None, MODE_STATE)
    layout = _Layout(n, n_players, m, output_mode=False)
    x_mat = np.asarray(x_star, dtype=float).reshape(n_players, m)
    state = np.zeros(layout.size)
    chain = layout.chain(state)
    chain[0] = x_mat
    f_star = np.zeros((n_players, m))
    for i, p in enumerate(plants):
        if p.drift is not None:
            f_star[i] = p.drift(chain[:, i, :], p.w)
    layout.y(state)[:] = f_star / gains.alpha2
    layout.x_hat(state)[:] = x_mat[None, :, :]
    rhs = _make_rhs(game, plants, g, gains, None, layout)
    return float(np.max(np.abs(rhs(state, 0.0))))


def settle_time(traj: Trajectory, x_star: np.ndarray, tol_rel: float):
    """First recorded time after which the decisions stay within tolerance of x_star.

    Returns None when the trajectory never settles through the horizon
    (including diverging runs).
    """
    x_mat = np.asarray(x_star, dtype=float).reshape(traj.decisions.shape[1:])
    threshold = tol_rel * max(1.0, float(np.max(np.abs(x_mat))))
    deviation = np.max(np.abs(traj.decisions - x_mat[None, :, :]), axis=(1, 2))
    exceed = np.nonzero(deviation > threshold)[0]
    if exceed.size == 0:
        return float(traj.times[0])
    last_bad = exceed[-1]
    if last_bad == len(traj.times) - 1:
        return None
    return float(traj.times[last_bad + 1])


def fit_exponential_rate(traj: Trajectory, window: tuple) -> tuple[float, float]:
    """Least-squares slope of log error over the window: (decay rate, R^2)."""
    if traj.error_norms is None:
        raise NonPositiveError("trajectory has no recorded error norms")
    t_lo, t_hi = window
    mask = (traj.times >= t_lo) & (traj.times <= t_hi)
    if np.count_nonzero(mask) < 2:
        raise EmptyWindow(f"window ({t_lo}, {t_hi}) selects fewer than two samples")
    t = traj.times[mask]
    e = traj.error_norms[mask]
    if np.any(e <= 0):
        raise NonPositiveError("window contains non-positive error samples")
    log_e = np.log(e)
    design = np.stack([t, np.ones_like(t)], axis=1)
    coef, _, _, _ = np.linalg.lstsq(design, log_e, rcond=None)
    fitted = design @ coef
    ss_res = float(np.sum((log_e - fitted) ** 2))
    ss_tot = float(np.sum((log_e - log_e.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(-coef[0]), r_squared


def mid_decay_window(traj: Trajectory) -> tuple[float, float]:
    """Window between 10% and 90% of the total error drop (transients excluded)."""
    if traj.error_norms is None:
        raise NonPositiveError("trajectory has no recorded error norms")
    e = traj.error_norms
    e0 = e[0]
    e_min = float(e.min())
    hi_level = e0 - 0.1 * (e0 - e_min)
    lo_level = e0 - 0.9 * (e0 - e_min)
    below_hi = np.nonzero(e <= hi_level)[0]
    below_lo = np.nonzero(e <= lo_level)[0]
    if below_hi.size == 0 or below_lo.size == 0:
        raise EmptyWindow("error trace never decays; no mid-decay window")
    return float(traj.times[below_hi[0]]), float(traj.times[below_lo[0]])


def post_transient_observer_error(traj: Trajectory, fraction: float = 0.2):
    """Sup norm of the recorded observer position error after the initial transient."""
    if traj.observer_errors is None:
        return None
    mask = traj.times >= fraction * traj.times[-1]
    return float(np.max(traj.observer_errors[mask]))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write the documented CSV: t, x_1_1, ..., x_N_m, err_norm, est_disagreement."""
    n_samples, n_players, m = traj.decisions.shape
    header = ["t"]
    header += [f"x_{i + 1}_{c + 1}" for i in range(n_players) for c in range(m)]
    header += ["err_norm", "est_disagreement"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in range(n_samples):
            row = [repr(float(traj.times[s]))]
            row += [repr(float(v)) for v in traj.decisions[s].ravel()]
            row.append("" if traj.error_norms is None else repr(float(traj.error_norms[s])))
            row.append(repr(float(traj.estimate_disagreement[s])))
            writer.writerow(row)

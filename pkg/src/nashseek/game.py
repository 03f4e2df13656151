"""Cost gradients, the stacked pseudo-gradient, and an independent equilibrium solver.

Games are supplied as per-player gradient oracles.  A game may additionally
carry a vectorized ``profile_gradient`` fast path (used heavily by the
integrator) and a ``cost_oracle`` used only for finite-difference validation
of the gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, NoConvergence

GradOracle = Callable[[int, np.ndarray, np.ndarray], np.ndarray]
CostOracle = Callable[[int, np.ndarray], float]
ProfileGradient = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Game:
    """N-player game over R^m decisions, described through its gradients.

    gradient_oracle(i, x_i, x_others) returns the gradient of player i's cost
    in its own decision, with x_others the stacked decisions of the other
    players in index order.  profile_gradient, when present, must agree with
    the oracle: it maps an (N, N, m) tensor whose row i is the full profile as
    seen by player i to the (N, m) matrix of own-gradients.
    """

    n_players: int
    decision_dim: int
    gradient_oracle: GradOracle
    cost_oracle: Optional[CostOracle] = None
    profile_gradient: Optional[ProfileGradient] = None


@dataclass(frozen=True)
class MonotonicityReport:
    """Empirical strong-monotonicity and Lipschitz bounds from paired sampling."""

    omega_hat: float
    theta_hat: float
    samples: int
    estimate_theta_hat: float


def _check_profile_dim(game: Game, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    want = game.n_players * game.decision_dim
    if x.shape != (want,):
        raise DimensionMismatch(f"profile must have shape ({want},), got {x.shape}")
    return x


def gradient_matrix(game: Game, profiles: np.ndarray) -> np.ndarray:
    """Own-gradients of all players, row i evaluated at profile row profiles[i].

    profiles has shape (N, N, m): profiles[i, j] is what player i uses as
    player j's decision.  Uses the vectorized fast path when the game has one.
    """
    n, m = game.n_players, game.decision_dim
    if game.profile_gradient is not None:
        return game.profile_gradient(profiles)
    out = np.empty((n, m))
    for i in range(n):
        others = np.delete(profiles[i], i, axis=0).reshape(-1)
        out[i] = game.gradient_oracle(i, profiles[i, i], others)
    return out


def pseudo_gradient(game: Game, x: np.ndarray) -> np.ndarray:
    """Stacked own-gradients evaluated at the true decision profile."""
    x = _check_profile_dim(game, x)
    n, m = game.n_players, game.decision_dim
    x_mat = x.reshape(n, m)
    profiles = np.broadcast_to(x_mat, (n, n, m))
    return gradient_matrix(game, profiles).reshape(-1)


def extended_pseudo_gradient(game: Game, x: np.ndarray, x_hat: np.ndarray) -> np.ndarray:
    """Stacked gradients with each player using its own decision and its estimates of others.

    x_hat is the row-major stacking of the (N, N, m) estimate tensor, row i
    holding player i's estimates of every player (its own row is ignored in
    favour of the true x_i).
    """
    x = _check_profile_dim(game, x)
    n, m = game.n_players, game.decision_dim
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape != (n * n * m,):
        raise DimensionMismatch(f"estimate stack must have shape ({n * n * m},), got {x_hat.shape}")
    profiles = x_hat.reshape(n, n, m).copy()
    idx = np.arange(n)
    profiles[idx, idx, :] = x.reshape(n, m)
    return gradient_matrix(game, profiles).reshape(-1)


def _fd_jacobian(game: Game, x: np.ndarray) -> np.ndarray:
    dim = x.size
    h = 1e-6 * max(1.0, float(np.linalg.norm(x)))
    jac = np.empty((dim, dim))
    for j in range(dim):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (pseudo_gradient(game, xp) - pseudo_gradient(game, xm)) / (2 * h)
    return jac


def nash_solve(game: Game, x0, tol: float, max_iters: int = 200,
               max_halvings: int = 40) -> np.ndarray:
    """Find the zero of the pseudo-gradient by damped Newton iteration.

    Backtracking halves the step while the pseudo-gradient norm does not
    decrease; when a Newton direction stalls entirely the iteration falls back
    to an explicit pseudo-gradient-flow step.  This solver is the independent
    reference used to judge the closed-loop simulations.

    Raises NoConvergence after the iteration budget, which for well-posed
    inputs signals a game without a strongly monotone pseudo-gradient.
    """
    x = _check_profile_dim(game, x0).copy()
    f = pseudo_gradient(game, x)
    for _ in range(max_iters):
        if np.max(np.abs(f)) <= tol:
            return x
        try:
            step = np.linalg.solve(_fd_jacobian(game, x), -f)
        except np.linalg.LinAlgError:
            step = -f
        norm0 = np.linalg.norm(f)
        improved = False
        for trial_step in (step, -f):  # Newton direction, then gradient-flow fallback
            scale = 1.0
            for _ in range(max_halvings + 1):
                candidate = x + scale * trial_step
                f_candidate = pseudo_gradient(game, candidate)
                if np.linalg.norm(f_candidate) < norm0:
                    x, f = candidate, f_candidate
                    improved = True
                    break
                scale *= 0.5
            if improved:
                break
        if not improved:
            raise NoConvergence("Newton and gradient-flow steps both stalled")
    if np.max(np.abs(f)) <= tol:
        return x
    raise NoConvergence(f"no convergence to tol={tol:g} within {max_iters} iterations")


def probe_monotonicity(game: Game, rng, n_samples: int = 2000,
                       box: tuple = (-10.0, 10.0)) -> MonotonicityReport:
    """Sample point pairs to bound the monotonicity and Lipschitz moduli.

    omega_hat is the smallest observed (x-y)^T (F(x)-F(y)) / ||x-y||^2 and
    theta_hat the largest observed ||F(x)-F(y)|| / ||x-y||; a companion
    estimate bounds the Lipschitz modulus of the extended pseudo-gradient in
    the estimate argument.  Coincident pairs are skipped.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n, m = game.n_players, game.decision_dim
    dim = n * m
    lo, hi = box
    omega = np.inf
    theta = 0.0
    theta_est = 0.0
    used = 0
    for _ in range(n_samples):
        x = rng.uniform(lo, hi, dim)
        y = rng.uniform(lo, hi, dim)
        d = x - y
        dd = float(d @ d)
        if dd < 1e-24:
            continue
        df = pseudo_gradient(game, x) - pseudo_gradient(game, y)
        omega = min(omega, float(d @ df) / dd)
        theta = max(theta, float(np.linalg.norm(df)) / np.sqrt(dd))
        ha = rng.uniform(lo, hi, n * n * m)
        hb = rng.uniform(lo, hi, n * n * m)
        dh = ha - hb
        ndh = float(np.linalg.norm(dh))
        if ndh > 1e-12:
            dfe = extended_pseudo_gradient(game, x, ha) - extended_pseudo_gradient(game, x, hb)
            theta_est = max(theta_est, float(np.linalg.norm(dfe)) / ndh)
        used += 1
    return MonotonicityReport(float(omega), float(theta), used, float(theta_est))


def gradient_consistency(game: Game, rng, n_points: int = 50,
                         box: tuple = (-10.0, 10.0), step_scale: float = 1e-6) -> float:
    """Worst relative gap between the gradient oracle and central differences of the cost.

    The per-component relative error uses a unit floor so that near-zero
    gradient components do not inflate the ratio.
    """
    if game.cost_oracle is None:
        raise ValueError("gradient_consistency requires a cost oracle")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    n, m = game.n_players, game.decision_dim
    lo, hi = box
    worst = 0.0
    for _ in range(n_points):
        x = rng.uniform(lo, hi, n * m)
        grads = pseudo_gradient(game, x).reshape(n, m)
        h = step_scale * max(1.0, float(np.linalg.norm(x)))
        for i in range(n):
            for c in range(m):
                xp = x.copy()
                xm = x.copy()
                xp[i * m + c] += h
                xm[i * m + c] -= h
                fd = (game.cost_oracle(i, xp) - game.cost_oracle(i, xm)) / (2 * h)
                err = abs(fd - grads[i, c]) / max(1.0, abs(grads[i, c]))
                worst = max(worst, err)
    return worst

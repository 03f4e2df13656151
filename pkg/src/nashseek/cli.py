"""Command-line entry point: run, nash, verify, sweep.

Exit codes: 0 success, 2 configuration problems, 3 numerical failures
(divergence, no convergence, not settled, failed checks).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import sim, verify
from .errors import ConfigInvalid, Diverged, NoConvergence, NashseekError
from .game import nash_solve, pseudo_gradient

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _assemble_config(args) -> dict:
    file_cfg = config_mod.load_config_file(args.config) if args.config else {}
    scenario = args.scenario or file_cfg.get("scenario")
    if scenario is None:
        raise ConfigInvalid("no scenario given (use --scenario or a config file)")
    algo = args.algo or file_cfg.get("algo") or config_mod.MODE_STATE
    cfg = config_mod.default_config(scenario, algo)
    cfg = config_mod.merge_config(cfg, file_cfg)
    cfg["scenario"] = scenario
    cfg["algo"] = algo
    if getattr(args, "seed", None) is not None:
        cfg["sim"]["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        cfg["output_dir"] = args.out
    cfg = config_mod.apply_set_overrides(cfg, getattr(args, "set", None))
    return cfg


def _execute_run(cfg: dict):
    """Run one configured simulation; returns (setup, trajectory, summary dict)."""
    setup = config_mod.build_run_setup(cfg)
    warnings = [] if setup.ordering.warning is None else [setup.ordering.warning]
    trajectory = sim.run(
        setup.game, setup.plants, setup.graph, setup.gains, setup.observer,
        setup.sim_config, setup.init, x_star=setup.x_star,
    )
    settle = sim.settle_time(trajectory, setup.x_star, setup.settle_tol)
    lambda_hat = r_squared = None
    try:
        window = sim.mid_decay_window(trajectory)
        lambda_hat, r_squared = sim.fit_exponential_rate(trajectory, window)
    except NashseekError:
        pass  # flat or non-decaying traces have no meaningful fit
    final_residual = float(np.max(np.abs(
        trajectory.final_decisions - setup.x_star.reshape(trajectory.final_decisions.shape))))
    summary = {
        "settle_time": settle,
        "lambda_hat": lambda_hat,
        "r_squared": r_squared,
        "final_residual": final_residual,
        "diverged": trajectory.diverged,
        "config_echo": setup.config_echo,
        "gain_ordering_warnings": warnings,
    }
    if trajectory.observer_errors is not None:
        summary["observer_sup_error"] = sim.post_transient_observer_error(trajectory)
    return setup, trajectory, summary


def cmd_run(args) -> int:
    cfg = _assemble_config(args)
    setup, trajectory, summary = _execute_run(cfg)
    out_dir = Path(setup.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim.write_trajectory_csv(trajectory, out_dir / "trajectory.csv")
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for warning in summary["gain_ordering_warnings"]:
        print(f"warning: {warning}")
    if setup.dt_guidance_warning:
        print(f"warning: {setup.dt_guidance_warning}")
    print(f"scenario {setup.scenario_name} ({setup.algo}): "
          f"settle_time={summary['settle_time']}, lambda_hat={summary['lambda_hat']}, "
          f"final_residual={summary['final_residual']:.3e}")
    print(f"wrote {out_dir / 'trajectory.csv'} and {out_dir / 'summary.json'}")
    return EXIT_OK if summary["settle_time"] is not None else EXIT_NUMERIC


def _selftest_game():
    """Quadratic smoke game J_i = ||x_i||^2 / 2 with the origin as equilibrium."""
    from .game import Game

    return Game(3, 2, lambda i, x_i, x_o: np.asarray(x_i, dtype=float)), np.zeros(6)


def cmd_nash(args) -> int:
    if args.scenario == "selftest":
        game, oracle = _selftest_game()
        solved = nash_solve(game, np.full(6, 2.0), tol=1e-10)
    else:
        cfg = _assemble_config(args)
        setup = config_mod.build_run_setup(cfg)
        game, oracle = setup.game, setup.x_star
        dim = game.n_players * game.decision_dim
        solved = nash_solve(game, np.zeros(dim), tol=1e-10)
    gap = float(np.max(np.abs(solved - oracle)))
    grad_norm = float(np.max(np.abs(pseudo_gradient(game, solved))))
    print(f"analytic oracle:  {np.array2string(oracle, precision=8)}")
    print(f"nash_solve:       {np.array2string(solved, precision=8)}")
    print(f"max gap: {gap:.3e}")
    print(f"pseudo-gradient sup norm at solution: {grad_norm:.3e}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_checks(only=args.only)
    failed = 0
    for res in results:
        tag = "PASS" if res.passed else "FAIL"
        print(f"[{tag}] {res.group}: {res.name} ({res.detail})")
        failed += 0 if res.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def _sweep_cell(cfg: dict, param: str, value):
    cell = config_mod.apply_set_overrides(cfg, [f"{param}={json.dumps(value)}"])
    try:
        _, trajectory, summary = _execute_run(cell)
    except NashseekError as exc:
        return {"value": value, "status": f"error:{type(exc).__name__}"}
    row = {
        "value": value,
        "settle_time": summary["settle_time"],
        "lambda_hat": summary["lambda_hat"],
        "r_squared": summary["r_squared"],
        "final_residual": summary["final_residual"],
        "observer_sup_error": summary.get("observer_sup_error"),
        "status": "ok",
    }
    return row


def cmd_sweep(args) -> int:
    cfg = _assemble_config(args)
    param = args.param
    if param not in config_mod._SET_ALIASES and "." not in param:
        raise ConfigInvalid(f"unknown sweep parameter {param!r}")
    values = []
    for chunk in args.values.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            values.append(json.loads(chunk))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"cannot parse sweep value {chunk!r}: {exc}") from exc

    env_cap = os.environ.get("NASHSEEK_THREADS")
    workers = max(1, min(len(values) or 1, int(env_cap) if env_cap else 4))
    rows = []
    if values:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda v: _sweep_cell(cfg, param, v), values))

    out_dir = Path(args.out or cfg.get("output_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = ["value", "settle_time", "lambda_hat", "r_squared",
               "final_residual", "observer_sup_error", "status"]
    path = out_dir / "sweep.csv"
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join("" if row.get(c) is None else repr(row[c]) if isinstance(row[c], float)
                              else str(row[c]) for c in columns) + "\n")
    print(f"wrote {path} ({len(rows)} cells)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nashseek",
        description="Distributed Nash equilibrium seeking for high-order nonlinear agents",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_algo=True):
        p.add_argument("--scenario", choices=config_mod.SCENARIO_NAMES)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-path config override (repeatable)")
        p.add_argument("--seed", type=int)
        if needs_algo:
            p.add_argument("--algo", choices=(sim.MODE_STATE, sim.MODE_OUTPUT))

    p_run = sub.add_parser("run", help="integrate one closed-loop scenario")
    common(p_run)
    p_run.add_argument("--out", help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_nash = sub.add_parser("nash", help="print the equilibrium from both solution paths")
    p_nash.add_argument("--scenario", choices=config_mod.SCENARIO_NAMES + ("selftest",))
    p_nash.add_argument("--config", help="JSON config file")
    p_nash.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_nash.add_argument("--seed", type=int)
    p_nash.set_defaults(func=cmd_nash, algo=None)

    p_verify = sub.add_parser("verify", help="run the invariant battery")
    p_verify.add_argument("--only", choices=verify.GROUPS)
    p_verify.set_defaults(func=cmd_verify)

    p_sweep = sub.add_parser("sweep", help="run one scenario across parameter values")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, help="config key to sweep")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (Diverged, NoConvergence) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NashseekError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands: ``generate`` (sample a game to JSON), ``run`` (one learning
trajectory with checkpoint metrics), ``experiment`` (trial batch to CSV),
``qre`` (smoothed-equilibrium solve), ``ode`` (mean-field integration with a
Lyapunov descent check).  Exit codes: 0 success, 1 configuration or usage
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import experiment as xp
from .analysis import EmpiricalTracker, q_diff, qre_gap, solve_qre
from .dynamics import Engine, PowerSchedule
from .games import PolymatrixGame, generate_potential, generate_zero_sum
from .graphs import erdos_renyi
from . import ode as ode_mod


class _Parser(argparse.ArgumentParser):
    """argparse reports usage errors with exit code 2; remap them to 1 so
    code 2 stays reserved for runtime failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_game_source(parser, with_seed=True):
    parser.add_argument("--game", help="path of a game JSON file to load")
    parser.add_argument(
        "--kind",
        choices=("zero-sum", "potential"),
        default="zero-sum",
        help="game family when generating (default zero-sum)",
    )
    parser.add_argument("--agents", type=int, default=4, help="number of agents (default 4)")
    parser.add_argument(
        "--actions", type=int, default=3, help="actions per agent (default 3)"
    )
    parser.add_argument(
        "--range",
        type=float,
        nargs=2,
        default=(-1.0, 1.0),
        metavar=("LO", "HI"),
        help="payoff range for generated games (default -1 1)",
    )
    if with_seed:
        parser.add_argument("--seed", type=int, default=0, help="master seed (default 0)")


def _game_from_args(args, game_ss) -> PolymatrixGame:
    if args.game:
        return PolymatrixGame.load(args.game)
    gen = generate_zero_sum if args.kind == "zero-sum" else generate_potential
    rng = np.random.Generator(np.random.PCG64(game_ss))
    return gen(args.agents, args.actions, tuple(args.range), rng=rng)


def _cmd_generate(args) -> int:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    gen = generate_zero_sum if args.kind == "zero-sum" else generate_potential
    game = gen(args.agents, args.actions, tuple(args.range), rng=rng)
    if args.out:
        game.save(args.out)
        print(f"wrote {args.out}")
    else:
        print(json.dumps(game.to_dict(), indent=1))
    return 0


def _cmd_run(args) -> int:
    ss = xp.trial_seed_sequence(args.seed, args.p, 0)
    game_ss, graph_ss, engine_ss = ss.spawn(3)
    game = _game_from_args(args, game_ss)
    graph = erdos_renyi(
        game.num_agents,
        args.p,
        np.random.Generator(np.random.PCG64(graph_ss)),
        symmetric=args.symmetric,
    )
    schedule = PowerSchedule(c=args.c, k0=args.k0, rho=args.rho)
    engine = Engine(game, graph, tau=args.tau, schedule=schedule, seed=engine_ss)
    tracker = EmpiricalTracker.for_game(game)
    stages = xp.checkpoint_stages(args.stages)
    rows = []

    def record(eng):
        pis = tracker.strategies()
        qs = [eng.q_values(i) for i in range(game.num_agents)]
        rows.append((eng.stage, qre_gap(game, pis, args.tau), q_diff(game, qs, pis)))

    engine.run(args.stages, tracker=tracker, recorder=record, record_at=stages)
    lines = ["stage,qre_gap,q_diff"]
    lines += [f"{s},{g:.17g},{d:.17g}" for s, g, d in rows]
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    else:
        print("\n".join(lines))
    if args.checkpoint:
        engine.save(args.checkpoint)
        print(f"wrote {args.checkpoint}")
    print(
        f"final stage {engine.stage}: qre_gap={rows[-1][1]:.6g} q_diff={rows[-1][2]:.6g}"
    )
    return 0


def _cmd_experiment(args) -> int:
    if args.config:
        config = xp.ExperimentConfig.load(args.config)
    else:
        config = xp.ExperimentConfig()
    overrides = {}
    if args.kind is not None:
        overrides["kind"] = args.kind
    if args.trials is not None:
        overrides["num_trials"] = args.trials
    if args.stages is not None:
        overrides["num_stages"] = args.stages
    if args.tau is not None:
        overrides["tau"] = args.tau
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.agents is not None:
        overrides["num_agents"] = args.agents
    if args.actions is not None:
        overrides["num_actions"] = args.actions
    if args.p:
        overrides["p_values"] = tuple(args.p)
    if args.fixed_game:
        overrides["fixed_game"] = True
    if args.symmetric:
        overrides["symmetric_obs"] = True
    if args.lyapunov:
        overrides["record_lyapunov"] = True
    if overrides:
        config = dataclasses.replace(config, **overrides)
    result = xp.run_experiment(config, max_workers=args.workers)
    paths = xp.write_outputs(result, args.out)
    print(f"wrote {paths['trials']} and {paths['summary']} ({len(result.records)} trials)")
    if result.failures:
        for fail in result.failures:
            print(f"trial failed: p={fail.p} trial={fail.trial}: {fail.message}", file=sys.stderr)
        print(f"{len(result.failures)} trial(s) failed", file=sys.stderr)
        return 2
    return 0


def _cmd_qre(args) -> int:
    ss = np.random.SeedSequence(args.seed)
    game = _game_from_args(args, ss)
    result = solve_qre(
        game, args.tau, damping=args.damping, tol=args.tol, max_iters=args.max_iters
    )
    doc = {
        "converged": result.converged,
        "iterations": result.iterations,
        "residual": result.residual,
        "tau": args.tau,
        "strategies": [s.tolist() for s in result.strategies],
        "qre_gap": qre_gap(game, result.strategies, args.tau),
    }
    text = json.dumps(doc, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    if not result.converged:
        print(
            f"did not reach tolerance {args.tol} in {args.max_iters} sweeps "
            f"(residual {result.residual:.3g})",
            file=sys.stderr,
        )
        return 2
    return 0


def _cmd_ode(args) -> int:
    ss = np.random.SeedSequence(args.seed)
    game_ss, graph_ss, state_ss = ss.spawn(3)
    game = _game_from_args(args, game_ss)
    if game.kind not in ("zero_sum", "potential"):
        print(f"no Lyapunov value for game kind {game.kind!r}", file=sys.stderr)
        return 1
    graph = erdos_renyi(
        game.num_agents,
        args.p,
        np.random.Generator(np.random.PCG64(graph_ss)),
        symmetric=args.symmetric,
    )
    if args.init == "uniform":
        state = ode_mod.uniform_state(game)
    else:
        state = ode_mod.random_state(game, np.random.Generator(np.random.PCG64(state_ss)))
    traj = ode_mod.integrate(
        game,
        graph,
        args.tau,
        state,
        t_end=args.t_end,
        h=args.h,
        method=args.method,
        num_samples=args.samples,
    )
    values = ode_mod.lyapunov_along(game, args.tau, traj)
    report = ode_mod.check_descent(values)
    if args.lyapunov_out:
        residuals = ode_mod.residuals_along(game, args.tau, traj)
        ode_mod.save_lyapunov_csv(args.lyapunov_out, traj.times, values, residuals)
        print(f"wrote {args.lyapunov_out}")
    print(
        f"V(0)={values[0]:.6g} V({traj.times[-1]:g})={values[-1]:.6g} "
        f"descent={'ok' if report.ok else 'VIOLATED'} "
        f"renorm_drift={traj.max_renorm_drift:.3g}"
    )
    if not report.ok:
        print(
            f"descent violated at sample {report.index}: increase {report.worst_increase:.3g}",
            file=sys.stderr,
        )
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polyq", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="sample a game and write it as JSON")
    p_gen.add_argument(
        "--kind", choices=("zero-sum", "potential"), default="zero-sum"
    )
    p_gen.add_argument("--agents", type=int, default=4)
    p_gen.add_argument("--actions", type=int, default=3)
    p_gen.add_argument(
        "--range", type=float, nargs=2, default=(-1.0, 1.0), metavar=("LO", "HI")
    )
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", help="output path (default: stdout)")
    p_gen.set_defaults(func=_cmd_generate)

    p_run = sub.add_parser("run", help="run one learning trajectory")
    _add_game_source(p_run)
    p_run.add_argument("--p", type=float, default=0.5, help="observation probability")
    p_run.add_argument("--symmetric", action="store_true", help="mutual observation pairs")
    p_run.add_argument("--stages", type=int, default=100_000)
    p_run.add_argument("--tau", type=float, default=0.25)
    p_run.add_argument("--c", type=float, default=1.0, help="step-size scale")
    p_run.add_argument("--k0", type=float, default=2.0, help="step-size offset")
    p_run.add_argument("--rho", type=float, default=0.6, help="step-size exponent")
    p_run.add_argument("--out", help="metrics CSV path (default: stdout)")
    p_run.add_argument("--checkpoint", help="write final engine state JSON here")
    p_run.set_defaults(func=_cmd_run)

    p_exp = sub.add_parser("experiment", help="run a trial batch and write CSVs")
    p_exp.add_argument("--config", help="experiment config JSON")
    p_exp.add_argument("--out", required=True, help="output directory")
    p_exp.add_argument("--kind", choices=("zero-sum", "potential"))
    p_exp.add_argument("--agents", type=int)
    p_exp.add_argument("--actions", type=int)
    p_exp.add_argument("--trials", type=int)
    p_exp.add_argument("--stages", type=int)
    p_exp.add_argument("--tau", type=float)
    p_exp.add_argument("--seed", type=int)
    p_exp.add_argument(
        "--p", type=float, action="append", help="observation probability (repeatable)"
    )
    p_exp.add_argument("--fixed-game", action="store_true")
    p_exp.add_argument("--symmetric", action="store_true")
    p_exp.add_argument(
        "--lyapunov",
        action="store_true",
        help="record the candidate-function value at each checkpoint",
    )
    p_exp.add_argument("--workers", type=int, help="process count (default: POLYQ_THREADS)")
    p_exp.set_defaults(func=_cmd_experiment)

    p_qre = sub.add_parser("qre", help="solve for the smoothed equilibrium")
    _add_game_source(p_qre)
    p_qre.add_argument("--tau", type=float, default=0.25)
    p_qre.add_argument("--damping", type=float, default=0.5)
    p_qre.add_argument("--tol", type=float, default=1e-10)
    p_qre.add_argument("--max-iters", type=int, default=100_000)
    p_qre.add_argument("--out", help="result JSON path (default: stdout)")
    p_qre.set_defaults(func=_cmd_qre)

    p_ode = sub.add_parser("ode", help="integrate the mean-field flow")
    _add_game_source(p_ode)
    p_ode.add_argument("--p", type=float, default=1.0, help="observation probability")
    p_ode.add_argument("--symmetric", action="store_true")
    p_ode.add_argument("--tau", type=float, default=0.25)
    p_ode.add_argument("--t-end", type=float, default=50.0)
    p_ode.add_argument("--h", type=float, default=1e-3)
    p_ode.add_argument("--method", choices=("rk4", "euler"), default="rk4")
    p_ode.add_argument("--samples", type=int, default=101)
    p_ode.add_argument(
        "--init", choices=("uniform", "random"), default="uniform",
        help="start point: zero estimates and uniform averages, or random",
    )
    p_ode.add_argument(
        "--lyapunov-out",
        help="write a time,V,res_0,... CSV of the candidate value and per-agent residuals",
    )
    p_ode.set_defaults(func=_cmd_ode)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ArithmeticError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

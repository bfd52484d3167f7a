"""Timing comparison between the compiled kernels and the pure-Python mirror.

Drives both kernel modules directly with identical buffers, so the numbers
reflect the hot loops alone (no engine bookkeeping).  Run from the repository
root after an editable install:

    python3 benchmarks/bench_backends.py
    python3 benchmarks/bench_backends.py --agents 8 --actions 5 --stages 20000
"""

import argparse
import time

import numpy as np

from polyq import generate_zero_sum, random_state
from polyq import _kernels_py
from polyq.graphs import erdos_renyi

try:
    from polyq import _kernels as _compiled
except ImportError:
    _compiled = None


def make_rngs(n, seed):
    return [
        np.random.Generator(np.random.PCG64(s))
        for s in np.random.SeedSequence(seed).spawn(n)
    ]


def bench_stages(kern, game, graph, num_stages, seed):
    n, m = game.num_agents, game.max_actions
    beliefs = np.zeros((n, n, m))
    for i in range(n):
        for j in range(n):
            if i != j:
                beliefs[i, j, : game.action_counts[j]] = 1.0 / game.action_counts[j]
    tracker = np.zeros((n, m))
    for i, c in enumerate(game.action_counts):
        tracker[i, :c] = 1.0 / c
    counts = np.array(game.action_counts, dtype=np.int64)
    args = (
        game.payoff_tensor(),
        counts,
        graph.adjacency(),
        np.zeros((n, m)),
        np.zeros((n, m)),
        beliefs,
        tracker,
        make_rngs(n, seed),
        0,
        num_stages,
        1.0,
        2.0,
        0.6,
        0.25,
        np.zeros((n, m)),
        np.zeros(n, dtype=np.int64),
        np.zeros(n),
        np.zeros(n),
        np.zeros(n, dtype=np.uint8),
    )
    start = time.perf_counter()
    kern.run_stages(*args)
    return time.perf_counter() - start


def bench_flow(kern, game, graph, num_steps, seed):
    n, m = game.num_agents, game.max_actions
    state = random_state(game, np.random.default_rng(seed))
    Y = np.stack([state.q_check, state.q_hat, state.pis]).astype(np.float64)
    counts = np.array(game.action_counts, dtype=np.int64)
    sample_steps = np.array([0, num_steps], dtype=np.int64)
    out = np.zeros((2, 3, n, m))
    br = np.zeros((n, m))
    K1, K2, K3, K4 = (np.zeros((3, n, m)) for _ in range(4))
    Ytmp = np.zeros((3, n, m))
    start = time.perf_counter()
    kern.integrate_flow(
        game.payoff_tensor(),
        counts,
        graph.adjacency(),
        0.25,
        Y,
        1e-3,
        num_steps,
        True,
        sample_steps,
        out,
        br,
        K1,
        K2,
        K3,
        K4,
        Ytmp,
    )
    return time.perf_counter() - start


def best_of(fn, repeats):
    return min(fn() for _ in range(repeats))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--agents", type=int, default=6)
    parser.add_argument("--actions", type=int, default=4)
    parser.add_argument("--stages", type=int, default=50_000)
    parser.add_argument("--steps", type=int, default=20_000, help="flow integration steps")
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _compiled is None:
        parser.exit(1, "compiled kernels are not available in this build\n")

    rng = np.random.default_rng(args.seed)
    game = generate_zero_sum(args.agents, args.actions, rng=rng)
    graph = erdos_renyi(args.agents, 0.5, rng)

    rows = []
    for label, fn, work in (
        (
            f"run_stages  ({args.stages} stages)",
            lambda kern: bench_stages(kern, game, graph, args.stages, args.seed),
            args.stages,
        ),
        (
            f"integrate_flow ({args.steps} rk4 steps)",
            lambda kern: bench_flow(kern, game, graph, args.steps, args.seed),
            args.steps,
        ),
    ):
        t_py = best_of(lambda: fn(_kernels_py), args.repeats)
        t_c = best_of(lambda: fn(_compiled), args.repeats)
        rows.append((label, t_py, t_c, work))

    print(f"agents={args.agents} actions={args.actions} repeats={args.repeats} (best shown)")
    print(f"{'kernel':<34} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for label, t_py, t_c, work in rows:
        print(
            f"{label:<34} {t_py:>9.3f}s {t_c:>9.3f}s {t_py / t_c:>7.1f}x"
            f"   ({1e6 * t_c / work:.2f} us/step compiled)"
        )


if __name__ == "__main__":
    main()

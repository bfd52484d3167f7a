"""Mean-field flow of the learning dynamics and numerical descent checks.

The flow couples three blocks per agent: the belief-based estimate relaxes
toward the observed part of the expected payoff against everyone's smoothed
best response, the payoff-based estimate toward the unobserved part, and the
empirical average toward the smoothed best response itself.  Stationary
points are exactly the states where both estimates are consistent with the
smoothed equilibrium induced by q_check + q_hat.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from . import _kernels_py
from .analysis import lyapunov_potential, lyapunov_zero_sum
from .dynamics import smoothed_best_response
from .games import PolymatrixGame
from .graphs import DirectedGraph, out_neighbors


@dataclass
class FlowState:
    """Point of the mean-field flow: padded (n, m_max) blocks."""

    q_check: np.ndarray
    q_hat: np.ndarray
    pis: np.ndarray

    def copy(self) -> "FlowState":
        return FlowState(self.q_check.copy(), self.q_hat.copy(), self.pis.copy())


def pack_state(game: PolymatrixGame, q_check, q_hat, pis) -> FlowState:
    """Build a FlowState from per-agent vectors (lists or padded arrays)."""

    def _pad(rows):
        out = np.zeros((game.num_agents, game.max_actions))
        for i, row in enumerate(rows):
            row = np.asarray(row, dtype=np.float64)
            m = game.action_counts[i]
            if row.shape[0] < m:
                raise ValueError(f"row {i} shorter than action count {m}")
            out[i, :m] = row[:m]
        return out

    return FlowState(_pad(q_check), _pad(q_hat), _pad(pis))


def uniform_state(game: PolymatrixGame) -> FlowState:
    """Zero estimates and uniform empirical averages."""
    n, m = game.num_agents, game.max_actions
    pis = np.zeros((n, m))
    for i, c in enumerate(game.action_counts):
        pis[i, :c] = 1.0 / c
    return FlowState(np.zeros((n, m)), np.zeros((n, m)), pis)


def random_state(game: PolymatrixGame, rng: np.random.Generator, q_scale: float = 1.0) -> FlowState:
    """Random point: estimate entries uniform on [-q_scale, q_scale] scaled by
    the number of opponents, strategies Dirichlet(1) on each simplex."""
    n, m = game.num_agents, game.max_actions
    span = q_scale * max(1, game.num_agents - 1)
    state = FlowState(np.zeros((n, m)), np.zeros((n, m)), np.zeros((n, m)))
    for i, c in enumerate(game.action_counts):
        state.q_check[i, :c] = rng.uniform(-span, span, size=c)
        state.q_hat[i, :c] = rng.uniform(-span, span, size=c)
        state.pis[i, :c] = rng.dirichlet(np.ones(c))
    return state


def vector_field(
    game: PolymatrixGame, obs_graph: DirectedGraph, tau: float, state: FlowState
) -> FlowState:
    """Mean-field drift at a point, via the numpy payoff operators.

    Independent of the integration kernels; used as their cross-check and as
    the reference for Monte-Carlo drift comparisons.
    """
    n = game.num_agents
    counts = game.action_counts
    dqc = np.zeros_like(state.q_check)
    dqh = np.zeros_like(state.q_hat)
    dpi = np.zeros_like(state.pis)
    brs = [
        smoothed_best_response(
            state.q_check[j, : counts[j]] + state.q_hat[j, : counts[j]], tau
        )
        for j in range(n)
    ]
    for i in range(n):
        mi = counts[i]
        observed = set(out_neighbors(obs_graph, i))
        s_obs = np.zeros(mi)
        s_un = np.zeros(mi)
        for j in range(n):
            if j == i:
                continue
            mat = game.edge_payoffs.get((i, j))
            if mat is None:
                continue
            term = mat @ brs[j]
            if j in observed:
                s_obs += term
            else:
                s_un += term
        dqc[i, :mi] = s_obs - state.q_check[i, :mi]
        dqh[i, :mi] = s_un - state.q_hat[i, :mi]
        dpi[i, :mi] = brs[i] - state.pis[i, :mi]
    return FlowState(dqc, dqh, dpi)


@dataclass
class Trajectory:
    """Sampled flow trajectory.

    ``max_renorm_drift`` is the largest |sum - 1| seen on any empirical-
    average row before its per-step renormalization, a cheap integration
    quality indicator.
    """

    times: np.ndarray
    q_check: np.ndarray
    q_hat: np.ndarray
    pis: np.ndarray
    method: str
    h: float
    max_renorm_drift: float

    def state(self, s: int) -> FlowState:
        return FlowState(self.q_check[s].copy(), self.q_hat[s].copy(), self.pis[s].copy())

    @property
    def num_samples(self) -> int:
        return self.times.shape[0]


def integrate(
    game: PolymatrixGame,
    obs_graph: DirectedGraph,
    tau: float,
    state: FlowState,
    t_end: float,
    h: float = 1e-3,
    method: str = "rk4",
    num_samples: int = 101,
    backend=None,
) -> Trajectory:
    """Fixed-step integration from ``state`` (not mutated) to time ``t_end``.

    Samples ``num_samples`` states at (nearly) evenly spaced step indices,
    always including the start and the end.  Raises ArithmeticError if the
    state leaves the finite range (possible with the euler method and a
    too-large step).
    """
    if method not in ("rk4", "euler"):
        raise ValueError(f"method must be 'rk4' or 'euler', got {method!r}")
    if h <= 0 or t_end < 0:
        raise ValueError("need h > 0 and t_end >= 0")
    if obs_graph.num_vertices != game.num_agents:
        raise ValueError("observability graph size does not match the game")
    kern = kernels if backend is None else (
        _kernels_py if backend == "python" else kernels
    )
    num_steps = int(round(t_end / h))
    num_samples = max(2, min(int(num_samples), num_steps + 1))
    sample_steps = np.unique(
        np.round(np.linspace(0, num_steps, num_samples)).astype(np.int64)
    )

    n, m = game.num_agents, game.max_actions
    Y = np.stack([state.q_check, state.q_hat, state.pis]).astype(np.float64)
    if Y.shape != (3, n, m):
        raise ValueError(f"state blocks must have shape ({n}, {m})")
    counts = np.array(game.action_counts, dtype=np.int64)
    out = np.zeros((sample_steps.shape[0], 3, n, m))
    br = np.zeros((n, m))
    K1, K2, K3, K4 = (np.zeros((3, n, m)) for _ in range(4))
    Ytmp = np.zeros((3, n, m))
    max_drift, bad_step = kern.integrate_flow(
        game.payoff_tensor(),
        counts,
        obs_graph.adjacency(),
        tau,
        Y,
        h,
        num_steps,
        method == "rk4",
        sample_steps,
        out,
        br,
        K1,
        K2,
        K3,
        K4,
        Ytmp,
    )
    if bad_step >= 0:
        raise ArithmeticError(
            f"non-finite state at step {bad_step} (t = {bad_step * h:.6g}); "
            "reduce h or use rk4"
        )
    return Trajectory(
        times=sample_steps.astype(np.float64) * h,
        q_check=out[:, 0].copy(),
        q_hat=out[:, 1].copy(),
        pis=out[:, 2].copy(),
        method=method,
        h=h,
        max_renorm_drift=float(max_drift),
    )


def lyapunov_along(
    game: PolymatrixGame, tau: float, traj: Trajectory, kind: str | None = None
) -> np.ndarray:
    """Lyapunov value at each trajectory sample.

    ``kind`` defaults to the game's own kind; the combined estimate
    q_check + q_hat is the q argument.
    """
    kind = game.kind if kind is None else kind
    if kind == "zero_sum":
        fn = lyapunov_zero_sum
    elif kind == "potential":
        fn = lyapunov_potential
    else:
        raise ValueError(f"no Lyapunov value defined for kind {kind!r}")
    values = np.empty(traj.num_samples)
    for s in range(traj.num_samples):
        values[s] = fn(game, tau, traj.q_check[s] + traj.q_hat[s], traj.pis[s])
    return values


def residuals_along(game: PolymatrixGame, tau: float, traj: Trajectory) -> np.ndarray:
    """Per-agent fixed-point residual max_a |pi_a - br_a(q)| at each sample.

    Returns an array of shape (num_samples, num_agents); zero rows identify
    stationary points of the empirical-average block.
    """
    out = np.zeros((traj.num_samples, game.num_agents))
    for s in range(traj.num_samples):
        for i, c in enumerate(game.action_counts):
            br = smoothed_best_response(
                traj.q_check[s, i, :c] + traj.q_hat[s, i, :c], tau
            )
            out[s, i] = np.max(np.abs(traj.pis[s, i, :c] - br))
    return out


@dataclass
class DescentReport:
    """Result of a monotone-descent scan over sampled values."""

    ok: bool
    worst_increase: float
    index: int


def check_descent(values, rel_tol: float = 1e-8) -> DescentReport:
    """Verify a sampled sequence never increases beyond the tolerance.

    An increase from values[s] to values[s+1] is allowed up to
    rel_tol * max(1, |values[s]|), absorbing roundoff near the floor.
    """
    values = np.asarray(values, dtype=np.float64)
    worst = 0.0
    where = -1
    for s in range(values.shape[0] - 1):
        allowed = rel_tol * max(1.0, abs(values[s]))
        increase = values[s + 1] - values[s]
        if increase > worst:
            worst = increase
            where = s + 1
        if increase > allowed:
            return DescentReport(False, float(increase), s + 1)
    return DescentReport(True, float(worst), where)


def save_lyapunov_csv(path, times, values, residuals=None) -> None:
    """Write a time,V table with full float round-trip precision.

    With ``residuals`` (shape (num_samples, num_agents)) one res_<i> column
    per agent is appended, giving the descent curve and the per-agent
    fixed-point residuals side by side.
    """
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.shape != values.shape:
        raise ValueError("times and values must have equal length")
    header = "time,V"
    if residuals is not None:
        residuals = np.asarray(residuals, dtype=np.float64)
        if residuals.ndim != 2 or residuals.shape[0] != times.shape[0]:
            raise ValueError("residuals must have one row per sample")
        header += "," + ",".join(f"res_{i}" for i in range(residuals.shape[1]))
    lines = [header]
    for s in range(times.shape[0]):
        row = f"{times[s]:.17g},{values[s]:.17g}"
        if residuals is not None:
            row += "," + ",".join(f"{r:.17g}" for r in residuals[s])
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")

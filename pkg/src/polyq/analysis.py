"""Equilibrium solvers, convergence metrics, and Lyapunov values.

The central object is the smoothed (logit) equilibrium at temperature tau:
every agent's strategy is the softmax of its expected payoff vector against
the others.  Convergence of learning is measured against it through the
equilibrium gap of the empirical averages and the estimate-consistency
distance between Q-estimates and true expected payoffs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import smoothed_best_response
from .games import PolymatrixGame, expected_payoff_vector, validate_strategy


def smooth_value(q, tau: float) -> float:
    """tau * log sum exp(q / tau): the value of the smoothed best response.

    Equals max(q) + tau * (entropy of the softmax); computed with
    max-subtraction so large |q|/tau does not overflow.
    """
    q = np.asarray(q, dtype=np.float64)
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    qmax = float(q.max())
    return qmax + tau * math.log(np.exp((q - qmax) / tau).sum())


def entropy(strategy) -> float:
    """Shannon entropy in nats, with 0 * log 0 = 0."""
    p = validate_strategy(strategy)
    mask = p > 0.0
    return float(-(p[mask] * np.log(p[mask])).sum())


def _per_agent(arrays, game: PolymatrixGame) -> list[np.ndarray]:
    """Normalize per-agent vectors given as a padded 2-d array or a sequence."""
    counts = game.action_counts
    if isinstance(arrays, np.ndarray) and arrays.ndim == 2:
        return [np.asarray(arrays[i, :m], dtype=np.float64) for i, m in enumerate(counts)]
    out = []
    if len(arrays) != game.num_agents:
        raise ValueError("need one vector per agent")
    for i, row in enumerate(arrays):
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (counts[i],):
            raise ValueError(f"vector {i} has shape {row.shape}, want ({counts[i]},)")
        out.append(row)
    return out


def qre_gap(game: PolymatrixGame, pis, tau: float) -> float:
    """Sum over agents of |payoff gain from switching to the smoothed best
    response against the others|.  Zero exactly at a smoothed equilibrium.
    """
    pis = _per_agent(pis, game)
    total = 0.0
    for i in range(game.num_agents):
        v = expected_payoff_vector(game, i, pis)
        br = smoothed_best_response(v, tau)
        total += abs(float(br @ v) - float(pis[i] @ v))
    return total


def q_diff(game: PolymatrixGame, qs, pis) -> float:
    """Mean Euclidean distance between Q-estimates and the expected payoff
    vectors against the given strategies."""
    qs = _per_agent(qs, game)
    pis = _per_agent(pis, game)
    total = 0.0
    for i in range(game.num_agents):
        v = expected_payoff_vector(game, i, pis)
        total += float(np.linalg.norm(qs[i] - v))
    return total / game.num_agents


def estimate_residual(game: PolymatrixGame, qs, pis) -> float:
    """Sum over agents of ||q_i - expected payoff vector||_2 (n * q_diff)."""
    return q_diff(game, qs, pis) * game.num_agents


@dataclass
class QreResult:
    """Outcome of the damped fixed-point iteration."""

    strategies: list[np.ndarray]
    converged: bool
    iterations: int
    residual: float


def solve_qre(
    game: PolymatrixGame,
    tau: float,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iters: int = 100_000,
    init=None,
) -> QreResult:
    """Damped iteration of the smoothed-best-response map from uniform.

    Each sweep computes every agent's softmax response to the current
    strategies simultaneously, then moves each strategy a ``damping``
    fraction toward it.  Stops when the pre-damping sup-norm residual drops
    to ``tol``; a non-converged result is returned, not raised.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    if init is None:
        pis = [np.full(m, 1.0 / m) for m in game.action_counts]
    else:
        pis = [p.copy() for p in _per_agent(init, game)]
    residual = math.inf
    for it in range(1, max_iters + 1):
        brs = [
            smoothed_best_response(expected_payoff_vector(game, i, pis), tau)
            for i in range(game.num_agents)
        ]
        residual = max(
            float(np.abs(br - pi).max()) for br, pi in zip(brs, pis)
        )
        if residual <= tol:
            return QreResult(brs, True, it, residual)
        pis = [
            (1.0 - damping) * pi + damping * br for pi, br in zip(pis, brs)
        ]
    return QreResult(pis, False, max_iters, residual)


def expected_payoff(game: PolymatrixGame, i: int, pis) -> float:
    """Agent i's expected payoff when everyone plays the given strategies."""
    pis = _per_agent(pis, game)
    return float(pis[i] @ expected_payoff_vector(game, i, pis))


def expected_potential(game: PolymatrixGame, pis) -> float:
    """Expected potential of independent mixed strategies: the sum over
    unordered interacting pairs of pi_i^T U_ij pi_j."""
    if game.kind != "potential":
        raise ValueError(f"game kind is {game.kind!r}, not 'potential'")
    pis = _per_agent(pis, game)
    total = 0.0
    for (i, j), mat in game.edge_payoffs.items():
        if i < j:
            total += float(pis[i] @ mat @ pis[j])
    return total


def lyapunov_zero_sum_terms(game: PolymatrixGame, tau: float, qs, pis) -> list[float]:
    """Per-agent terms of the zero-sum Lyapunov value.

    Each term is (smoothed value of q_i) minus (expected payoff plus tau
    times own entropy) plus the estimate-consistency distance; each is
    nonnegative when q_i matches the expected payoff vector, and the sum
    decays exponentially along the mean-field flow of zero-sum games.
    """
    qs = _per_agent(qs, game)
    pis = _per_agent(pis, game)
    terms = []
    for i in range(game.num_agents):
        v = expected_payoff_vector(game, i, pis)
        value = smooth_value(qs[i], tau)
        attained = float(pis[i] @ v) + tau * entropy(pis[i])
        terms.append(value - attained + float(np.linalg.norm(qs[i] - v)))
    return terms


def lyapunov_zero_sum(game: PolymatrixGame, tau: float, qs, pis) -> float:
    return float(sum(lyapunov_zero_sum_terms(game, tau, qs, pis)))


def lyapunov_potential(game: PolymatrixGame, tau: float, qs, pis) -> float:
    """Lyapunov value for potential games: negated smoothed potential plus
    twice the total estimate-consistency distance."""
    pis = _per_agent(pis, game)
    value = -expected_potential(game, pis) - tau * sum(entropy(p) for p in pis)
    return value + 2.0 * estimate_residual(game, qs, pis)


@dataclass
class EmpiricalTracker:
    """Step-size weighted empirical average of played actions.

    Updated every stage with the same step size as the belief-based
    estimates, starting from uniform; rows are padded to the largest action
    count.
    """

    pis: np.ndarray
    counts: tuple[int, ...]
    stage: int = 0

    @classmethod
    def for_game(cls, game: PolymatrixGame) -> "EmpiricalTracker":
        counts = game.action_counts
        pis = np.zeros((game.num_agents, game.max_actions))
        for i, m in enumerate(counts):
            pis[i, :m] = 1.0 / m
        return cls(pis=pis, counts=counts)

    def update(self, actions, alpha: float) -> None:
        # same elementwise form as the simulation kernels, so replaying a
        # recorded action sequence reproduces a tracked run bit for bit
        for i, m in enumerate(self.counts):
            ai = int(actions[i])
            if not 0 <= ai < m:
                raise ValueError(f"action {ai} out of range for agent {i}")
            for a in range(m):
                e_a = 1.0 if a == ai else 0.0
                self.pis[i, a] = self.pis[i, a] + alpha * (e_a - self.pis[i, a])
        self.stage += 1

    def strategies(self) -> list[np.ndarray]:
        return [self.pis[i, :m].copy() for i, m in enumerate(self.counts)]

"""Learning engine: belief-based and payoff-based Q-estimates under partial
observability.

Each stage, every agent samples an action from the smoothed best response to
its combined estimate q = q_check + q_hat.  The belief-based part q_check
tracks the payoff vector of *observed* opponents' realized actions with the
common step size; the payoff-based part q_hat tracks the residual payoff of
unobserved interactions at the played action only, with the step size
normalized by the played action's probability (thresholded at 1).  With full
observation the dynamics are smoothed fictitious play; with no observation
they are individual Q-learning.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import kernels
from . import _kernels_py
from .games import PolymatrixGame, validate_strategy
from .graphs import DirectedGraph, out_neighbors


def smoothed_best_response(q, tau: float) -> np.ndarray:
    """Softmax of q at temperature tau, computed with max-subtraction.

    Adding a constant to q leaves the output unchanged.  Entries are
    strictly positive unless the scaled gap (q_max - q_a) / tau exceeds the
    exp underflow threshold (about 745), where they round to exactly 0.
    """
    q = np.asarray(q, dtype=np.float64)
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if q.ndim != 1 or q.size == 0 or not np.all(np.isfinite(q)):
        raise ValueError("q must be a non-empty finite vector")
    e = np.exp((q - q.max()) / tau)
    return e / e.sum()


def sample_action(strategy, rng: np.random.Generator) -> int:
    """Draw an action index by inverse CDF from one uniform variate.

    Uses the same cumulative walk as the simulation kernels, so a given rng
    state yields the same index here and there.
    """
    probs = validate_strategy(strategy)
    u = rng.random()
    cum = 0.0
    for a in range(probs.shape[0] - 1):
        cum += probs[a]
        if u < cum:
            return a
    return probs.shape[0] - 1


def belief_update(belief, observed_action: int, alpha: float) -> np.ndarray:
    """Move a belief toward the degenerate strategy at the observed action."""
    belief = validate_strategy(belief)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"step size must lie in (0, 1), got {alpha}")
    if not 0 <= observed_action < belief.shape[0]:
        raise ValueError(f"observed action {observed_action} out of range")
    onehot = np.zeros_like(belief)
    onehot[observed_action] = 1.0
    return belief + alpha * (onehot - belief)


def observed_payoff_vector(
    game: PolymatrixGame, obs_graph: DirectedGraph, i: int, observed_actions: dict
) -> np.ndarray:
    """Counterfactual payoff of each of agent i's actions from observed pairs.

    ``observed_actions`` must be keyed exactly by i's out-neighbors in the
    observability graph.
    """
    expected = out_neighbors(obs_graph, i)
    if sorted(observed_actions) != expected:
        raise ValueError(
            f"observed_actions keys {sorted(observed_actions)} != out-neighbors {expected}"
        )
    vec = np.zeros(game.action_counts[i])
    for j in expected:
        aj = int(observed_actions[j])
        if not 0 <= aj < game.action_counts[j]:
            raise ValueError(f"action {aj} out of range for agent {j}")
        mat = game.edge_payoffs.get((i, j))
        if mat is not None:
            vec += mat[:, aj]
    return vec


def residual_payoff(u_realized: float, u_check_at_played: float) -> float:
    """Realized payoff minus the observed part at the played action."""
    return u_realized - u_check_at_played


def normalized_step(alpha_k: float, br_prob_of_played: float) -> float:
    """min{1, alpha / probability of the played action}."""
    if not 0.0 < alpha_k < 1.0:
        raise ValueError(f"reference step size must lie in (0, 1), got {alpha_k}")
    if br_prob_of_played <= 0.0 or br_prob_of_played > 1.0:
        raise ValueError(
            f"played-action probability must lie in (0, 1], got {br_prob_of_played}"
        )
    return min(1.0, alpha_k / max(br_prob_of_played, 1e-300))


def q_check_update(q_check, u_check_vector, alpha_k: float) -> np.ndarray:
    """Synchronous relaxation of every entry toward the observed vector."""
    q_check = np.asarray(q_check, dtype=np.float64)
    u_check_vector = np.asarray(u_check_vector, dtype=np.float64)
    if q_check.shape != u_check_vector.shape:
        raise ValueError("q_check and target must have the same shape")
    return q_check + alpha_k * (u_check_vector - q_check)


def q_hat_update(q_hat, played_action: int, u_hat: float, step: float) -> np.ndarray:
    """Update the played action's entry only, with a step in [0, 1]."""
    q_hat = np.asarray(q_hat, dtype=np.float64)
    if not 0.0 <= step <= 1.0:
        raise ValueError(f"step must lie in [0, 1], got {step}")
    if not 0 <= played_action < q_hat.shape[0]:
        raise ValueError(f"played action {played_action} out of range")
    out = q_hat.copy()
    out[played_action] = out[played_action] + step * (u_hat - out[played_action])
    return out


@dataclass(frozen=True)
class PowerSchedule:
    """Step-size family alpha_k = c / (k + k0)^rho.

    rho in (0.5, 1] and c * k0^(-rho) < 1 guarantee the stochastic
    approximation conditions: alpha_k in (0, 1), decaying, non-summable, and
    square-summable.
    """

    c: float = 1.0
    k0: float = 2.0
    rho: float = 0.6

    def __post_init__(self):
        if not 0.5 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0.5, 1], got {self.rho}")
        if self.c <= 0 or self.k0 <= 0:
            raise ValueError("c and k0 must be positive")
        if self.c / self.k0**self.rho >= 1.0:
            raise ValueError(
                f"c/k0^rho = {self.c / self.k0 ** self.rho} >= 1; alpha_0 must be below 1"
            )

    def alpha(self, k: int) -> float:
        if k < 0:
            raise ValueError(f"stage index must be nonnegative, got {k}")
        return self.c / (k + self.k0) ** self.rho

    def to_dict(self) -> dict:
        return {"c": self.c, "k0": self.k0, "rho": self.rho}

    @classmethod
    def from_dict(cls, doc: dict) -> "PowerSchedule":
        return cls(c=float(doc["c"]), k0=float(doc["k0"]), rho=float(doc["rho"]))


def alpha(schedule: PowerSchedule, k: int) -> float:
    return schedule.alpha(k)


@dataclass
class AgentState:
    """One agent's view: belief-based estimate, payoff-based estimate, and
    beliefs about the opponents it can observe (keyed by opponent index).

    With zero initialization both estimates stay bounded by (n-1) times the
    largest |edge payoff|: every update is a convex combination of the
    current value and a bounded target.
    """

    q_check: np.ndarray
    q_hat: np.ndarray
    beliefs: dict[int, np.ndarray]


@dataclass(frozen=True)
class StageOutcome:
    """Diagnostics of one executed stage."""

    stage: int
    actions: tuple[int, ...]
    payoffs: np.ndarray
    alpha: float
    step_sizes: np.ndarray
    clamped: np.ndarray


class Engine:
    """Synchronized repeated-play state for all agents.

    Single-writer: ``step``/``run`` mutate the engine.  Distinct engines are
    fully independent, so trials can run concurrently without shared state.
    Every agent draws actions from its own random sub-stream (spawned from
    the seed by agent index), which makes trajectories independent of the
    order agents are processed in within a stage.
    """

    def __init__(
        self,
        game: PolymatrixGame,
        obs_graph: DirectedGraph,
        tau: float = 0.25,
        schedule: PowerSchedule | None = None,
        seed=None,
        q_check_init=None,
        q_hat_init=None,
    ):
        if obs_graph.num_vertices != game.num_agents:
            raise ValueError(
                f"observability graph has {obs_graph.num_vertices} vertices "
                f"for {game.num_agents} agents"
            )
        if tau <= 0:
            raise ValueError(f"temperature must be positive, got {tau}")
        self.game = game
        self.obs_graph = obs_graph
        self.tau = float(tau)
        self.schedule = schedule if schedule is not None else PowerSchedule()
        n, m = game.num_agents, game.max_actions
        self._counts = np.array(game.action_counts, dtype=np.int64)
        self._U = game.payoff_tensor()
        self._obs = obs_graph.adjacency()
        self._q_check = self._init_block(q_check_init, "q_check_init")
        self._q_hat = self._init_block(q_hat_init, "q_hat_init")
        self._beliefs = np.zeros((n, n, m))
        for i in range(n):
            for j in range(n):
                if j != i:
                    self._beliefs[i, j, : self._counts[j]] = 1.0 / self._counts[j]
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        self._rngs = [np.random.Generator(np.random.PCG64(s)) for s in seed.spawn(n)]
        self._stage = 0
        self.last_clamp_stage = -1
        # working buffers; after a step they hold that stage's diagnostics
        self._probs = np.zeros((n, m))
        self._actions = np.zeros(n, dtype=np.int64)
        self._payoffs = np.zeros(n)
        self._steps = np.zeros(n)
        self._clamped = np.zeros(n, dtype=np.uint8)

    def _init_block(self, init, name) -> np.ndarray:
        n, m = self.game.num_agents, self.game.max_actions
        block = np.zeros((n, m))
        if init is not None:
            for i, row in enumerate(init):
                row = np.asarray(row, dtype=np.float64)
                if row.shape != (self.game.action_counts[i],):
                    raise ValueError(f"{name}[{i}] has wrong length")
                block[i, : row.shape[0]] = row
        return block

    @property
    def num_agents(self) -> int:
        return self.game.num_agents

    @property
    def stage(self) -> int:
        return self._stage

    @property
    def q_check(self) -> np.ndarray:
        """Padded (n, m_max) belief-based estimates (rows trimmed per agent)."""
        return self._q_check

    @property
    def q_hat(self) -> np.ndarray:
        return self._q_hat

    def q_values(self, i: int) -> np.ndarray:
        """Combined estimate q_check + q_hat for agent i (trimmed copy)."""
        m = self.game.action_counts[i]
        return self._q_check[i, :m] + self._q_hat[i, :m]

    def agent(self, i: int) -> AgentState:
        m = self.game.action_counts[i]
        beliefs = {
            j: self._beliefs[i, j, : self.game.action_counts[j]]
            for j in out_neighbors(self.obs_graph, i)
        }
        return AgentState(self._q_check[i, :m], self._q_hat[i, :m], beliefs)

    @property
    def agents(self) -> list[AgentState]:
        return [self.agent(i) for i in range(self.num_agents)]

    def _run_kernel(self, num_stages: int, tracker_array=None, order=None):
        kern = kernels if order is None else _kernels_py
        last = kern.run_stages(
            self._U,
            self._counts,
            self._obs,
            self._q_check,
            self._q_hat,
            self._beliefs,
            tracker_array,
            self._rngs,
            self._stage,
            num_stages,
            self.schedule.c,
            self.schedule.k0,
            self.schedule.rho,
            self.tau,
            self._probs,
            self._actions,
            self._payoffs,
            self._steps,
            self._clamped,
            order=order,
        )
        if last >= 0:
            self.last_clamp_stage = max(self.last_clamp_stage, int(last))
        self._stage += num_stages

    def step(self, tracker=None, agent_order=None) -> StageOutcome:
        """Execute one simultaneous stage and return its diagnostics.

        ``agent_order`` permutes per-agent processing (pure-Python path);
        the trajectory is identical for any order.
        """
        stage = self._stage
        a = self.schedule.alpha(stage)
        self._run_kernel(1, tracker_array=_tracker_array(tracker), order=agent_order)
        _bump_tracker_stage(tracker, 1)
        return StageOutcome(
            stage=stage,
            actions=tuple(int(x) for x in self._actions),
            payoffs=self._payoffs.copy(),
            alpha=a,
            step_sizes=self._steps.copy(),
            clamped=self._clamped.astype(bool),
        )

    def run(self, num_stages: int, tracker=None, recorder=None, record_at=()) -> "Engine":
        """Advance ``num_stages`` stages, invoking ``recorder(engine)`` when
        the stage counter reaches each value in ``record_at``.

        ``tracker`` (an EmpiricalTracker or a padded (n, m_max) array) is
        updated every stage with the common step size.  Running k1 then k2
        stages is identical to running k1 + k2: the schedule is indexed by
        the absolute stage counter.
        """
        if num_stages < 0:
            raise ValueError(f"num_stages must be nonnegative, got {num_stages}")
        end = self._stage + num_stages
        points = sorted({int(s) for s in record_at if self._stage < int(s) <= end})
        arr = _tracker_array(tracker)
        for point in points:
            chunk = point - self._stage
            self._run_kernel(chunk, tracker_array=arr)
            _bump_tracker_stage(tracker, chunk)
            if recorder is not None:
                recorder(self)
        if self._stage < end:
            chunk = end - self._stage
            self._run_kernel(chunk, tracker_array=arr)
            _bump_tracker_stage(tracker, chunk)
        return self

    def to_dict(self) -> dict:
        counts = self.game.action_counts
        beliefs = [
            {
                "agent": i,
                "about": j,
                "probs": self._beliefs[i, j, : counts[j]].tolist(),
            }
            for i in range(self.num_agents)
            for j in out_neighbors(self.obs_graph, i)
        ]
        return {
            "format": "polyq-engine",
            "game": self.game.to_dict(),
            "obs_graph": self.obs_graph.to_dict(),
            "tau": self.tau,
            "schedule": self.schedule.to_dict(),
            "stage": self._stage,
            "last_clamp_stage": self.last_clamp_stage,
            "q_check": [self._q_check[i, :m].tolist() for i, m in enumerate(counts)],
            "q_hat": [self._q_hat[i, :m].tolist() for i, m in enumerate(counts)],
            "beliefs": beliefs,
            "rng_states": [g.bit_generator.state for g in self._rngs],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Engine":
        game = PolymatrixGame.from_dict(doc["game"])
        graph = DirectedGraph.from_dict(doc["obs_graph"])
        engine = cls(
            game,
            graph,
            tau=float(doc["tau"]),
            schedule=PowerSchedule.from_dict(doc["schedule"]),
            q_check_init=doc["q_check"],
            q_hat_init=doc["q_hat"],
        )
        for entry in doc["beliefs"]:
            i, j = int(entry["agent"]), int(entry["about"])
            probs = np.asarray(entry["probs"], dtype=np.float64)
            engine._beliefs[i, j, : probs.shape[0]] = probs
        for gen, state in zip(engine._rngs, doc["rng_states"]):
            gen.bit_generator.state = state
        engine._stage = int(doc["stage"])
        engine.last_clamp_stage = int(doc["last_clamp_stage"])
        return engine

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Engine":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _tracker_array(tracker):
    if tracker is None or isinstance(tracker, np.ndarray):
        return tracker
    return tracker.pis


def _bump_tracker_stage(tracker, by: int):
    if tracker is not None and hasattr(tracker, "stage"):
        tracker.stage += by


def run(engine: Engine, num_stages: int, tracker=None, recorder=None, record_at=()) -> Engine:
    """Module-level alias for ``Engine.run``."""
    return engine.run(num_stages, tracker=tracker, recorder=recorder, record_at=record_at)


@dataclass(frozen=True)
class DriftEstimate:
    """Monte-Carlo estimate of per-stage expected increments / alpha."""

    q_check: np.ndarray
    q_hat: np.ndarray
    pi: np.ndarray
    se_q_check: np.ndarray
    se_q_hat: np.ndarray
    se_pi: np.ndarray
    clamp_fraction: float


def monte_carlo_drift(
    game: PolymatrixGame,
    obs_graph: DirectedGraph,
    tau: float,
    q_check,
    q_hat,
    pis,
    alpha_k: float,
    num_samples: int,
    rng: np.random.Generator,
) -> DriftEstimate:
    """Average the stage increments of a frozen state over resampled stages.

    All arrays are padded (n, m_max).  Increments are divided by alpha_k, so
    when the step-size threshold never fires (``clamp_fraction == 0``) the
    means converge to the mean-field drift: observed/unobserved expected
    payoff vectors minus the current estimates, and smoothed best response
    minus the empirical average.
    """
    n, m = game.num_agents, game.max_actions
    q_check = np.asarray(q_check, dtype=np.float64)
    q_hat = np.asarray(q_hat, dtype=np.float64)
    pis = np.asarray(pis, dtype=np.float64)
    U = game.payoff_tensor()
    obs = obs_graph.adjacency()
    counts = game.action_counts

    br = np.zeros((n, m))
    for i in range(n):
        br[i, : counts[i]] = smoothed_best_response(
            q_check[i, : counts[i]] + q_hat[i, : counts[i]], tau
        )

    acts = np.empty((num_samples, n), dtype=np.int64)
    for i in range(n):
        acts[:, i] = rng.choice(counts[i], size=num_samples, p=br[i, : counts[i]])

    dq_check = np.zeros((num_samples, n, m))
    dq_hat = np.zeros((num_samples, n, m))
    dpi = np.zeros((num_samples, n, m))
    clamps = 0

    for i in range(n):
        mi = counts[i]
        u_obs = np.zeros((num_samples, mi))
        u_unobs_played = np.zeros(num_samples)
        for j in range(n):
            if j == i:
                continue
            block = U[i, j, :mi, :]  # (mi, m)
            if obs[i, j]:
                u_obs += block[:, acts[:, j]].T
            else:
                u_unobs_played += block[acts[:, i], acts[:, j]]
        dq_check[:, i, :mi] = u_obs - q_check[i, :mi]

        ratios = alpha_k / br[i, :mi]
        clamps += int(np.sum(ratios[acts[:, i]] > 1.0))
        factors = np.minimum(1.0, ratios) / alpha_k
        played = acts[:, i]
        dq_hat[np.arange(num_samples), i, played] = factors[played] * (
            u_unobs_played - q_hat[i, played]
        )

        onehot = np.zeros((num_samples, mi))
        onehot[np.arange(num_samples), played] = 1.0
        dpi[:, i, :mi] = onehot - pis[i, :mi]

    def _mean_se(block):
        mean = block.mean(axis=0)
        se = block.std(axis=0, ddof=1) / math.sqrt(num_samples)
        return mean, se

    mean_qc, se_qc = _mean_se(dq_check)
    mean_qh, se_qh = _mean_se(dq_hat)
    mean_pi, se_pi = _mean_se(dpi)
    return DriftEstimate(
        q_check=mean_qc,
        q_hat=mean_qh,
        pi=mean_pi,
        se_q_check=se_qc,
        se_q_hat=se_qh,
        se_pi=se_pi,
        clamp_fraction=clamps / num_samples,
    )

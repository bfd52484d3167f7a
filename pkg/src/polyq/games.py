"""Polymatrix games: pairwise payoff matrices on a directed interaction graph.

Agent i's payoff for a joint action is the sum of the edge payoffs
``u[i][j][a_i, a_j]`` over its out-edges ``(i, j)``.  Absent edges contribute
zero.  Two structured families are supported: zero-sum (payoffs over all
agents sum to zero for every joint action) and potential (a common function
whose unilateral-deviation differences equal each agent's payoff differences).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("zero_sum", "potential", "general")

# Exhaustive profile scans are capped at this many joint actions; larger
# games are checked on random profiles instead.
EXHAUSTIVE_PROFILE_LIMIT = 10_000

DEFAULT_PAYOFF_RANGE = (-1.0, 1.0)


@dataclass
class PolymatrixGame:
    """Immutable polymatrix game.

    ``edge_payoffs`` maps each directed edge ``(i, j)`` to a matrix of shape
    ``(action_counts[i], action_counts[j])``.  Instances are frozen by
    convention: the matrices are made read-only at construction so a game can
    be shared across concurrent trial workers.
    """

    num_agents: int
    action_counts: tuple[int, ...]
    edge_payoffs: dict[tuple[int, int], np.ndarray]
    kind: str = "general"
    _tensor: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.num_agents < 1:
            raise ValueError(f"num_agents must be positive, got {self.num_agents}")
        if len(self.action_counts) != self.num_agents:
            raise ValueError("action_counts length must equal num_agents")
        if any(m < 1 for m in self.action_counts):
            raise ValueError("every agent needs at least one action")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        self.action_counts = tuple(int(m) for m in self.action_counts)
        for (i, j), mat in self.edge_payoffs.items():
            if i == j:
                raise ValueError(f"self-edge ({i},{i}) is not allowed")
            if not (0 <= i < self.num_agents and 0 <= j < self.num_agents):
                raise ValueError(f"edge ({i},{j}) out of range")
            mat = np.ascontiguousarray(mat, dtype=np.float64)
            expect = (self.action_counts[i], self.action_counts[j])
            if mat.shape != expect:
                raise ValueError(
                    f"edge ({i},{j}) matrix has shape {mat.shape}, expected {expect}"
                )
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"edge ({i},{j}) matrix has non-finite entries")
            mat.flags.writeable = False
            self.edge_payoffs[(i, j)] = mat

    @property
    def edges(self):
        return set(self.edge_payoffs)

    @property
    def max_actions(self) -> int:
        return max(self.action_counts)

    def neighbors(self, i: int) -> list[int]:
        """Sorted out-neighbors of agent i in the interaction graph."""
        return sorted(j for (s, j) in self.edge_payoffs if s == i)

    def payoff_tensor(self) -> np.ndarray:
        """Dense ``(n, n, m_max, m_max)`` tensor, zero-filled for absent edges.

        Cached; used by the simulation and ODE kernels and by the vectorized
        expectation helpers.
        """
        if self._tensor is None:
            n, m = self.num_agents, self.max_actions
            tensor = np.zeros((n, n, m, m))
            for (i, j), mat in self.edge_payoffs.items():
                tensor[i, j, : mat.shape[0], : mat.shape[1]] = mat
            tensor.flags.writeable = False
            self._tensor = tensor
        return self._tensor

    def max_abs_payoff(self) -> float:
        """Largest |edge payoff|; bounds every Q-estimate by (n-1) times it."""
        if not self.edge_payoffs:
            return 0.0
        return max(float(np.abs(m).max()) for m in self.edge_payoffs.values())

    def to_dict(self) -> dict:
        edges = [
            {"from": i, "to": j, "matrix": self.edge_payoffs[(i, j)].tolist()}
            for (i, j) in sorted(self.edge_payoffs)
        ]
        return {
            "format": "polymatrix-game",
            "num_agents": self.num_agents,
            "action_counts": list(self.action_counts),
            "kind": self.kind,
            "edges": edges,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PolymatrixGame":
        payoffs = {
            (int(e["from"]), int(e["to"])): np.asarray(e["matrix"], dtype=np.float64)
            for e in doc["edges"]
        }
        return cls(
            num_agents=int(doc["num_agents"]),
            action_counts=tuple(int(m) for m in doc["action_counts"]),
            edge_payoffs=payoffs,
            kind=doc.get("kind", "general"),
        )

    def save(self, path) -> None:
        """Write the JSON document; floats use shortest round-trip decimals
        (<= 17 significant digits), so load() is bit-exact."""
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path, validate: bool = True) -> "PolymatrixGame":
        game = cls.from_dict(json.loads(Path(path).read_text()))
        if validate and game.kind != "general":
            check_kind(game)
        return game


def validate_profile(game: PolymatrixGame, profile) -> tuple[int, ...]:
    profile = tuple(int(a) for a in profile)
    if len(profile) != game.num_agents:
        raise ValueError(
            f"profile has {len(profile)} entries for {game.num_agents} agents"
        )
    for i, a in enumerate(profile):
        if not 0 <= a < game.action_counts[i]:
            raise ValueError(f"action {a} out of range for agent {i}")
    return profile


def validate_strategy(probs, num_actions: int | None = None) -> np.ndarray:
    """Check a probability vector: nonnegative, sums to 1 within 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ValueError("mixed strategy must be a 1-D probability vector")
    if num_actions is not None and probs.shape[0] != num_actions:
        raise ValueError(
            f"strategy has {probs.shape[0]} entries, expected {num_actions}"
        )
    if np.any(probs < 0):
        raise ValueError("strategy has negative entries")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError(f"strategy sums to {probs.sum()!r}, not 1")
    return probs


def payoff(game: PolymatrixGame, i: int, profile) -> float:
    """Realized payoff of agent i under a joint action profile."""
    profile = validate_profile(game, profile)
    total = 0.0
    for j in game.neighbors(i):
        total += float(game.edge_payoffs[(i, j)][profile[i], profile[j]])
    return total


def expected_payoff_vector(game: PolymatrixGame, i: int, opponents) -> np.ndarray:
    """Expected payoff of each of agent i's actions against mixed opponents.

    ``opponents`` holds one strategy per opponent, either as a mapping
    ``{j: strategy}`` or as a sequence over all agents (entry i ignored).
    """
    if isinstance(opponents, dict):
        strategies = opponents
    else:
        if len(opponents) != game.num_agents:
            raise ValueError("need one strategy slot per agent")
        strategies = {j: s for j, s in enumerate(opponents) if j != i}
    vec = np.zeros(game.action_counts[i])
    for j in game.neighbors(i):
        if j not in strategies:
            raise ValueError(f"missing strategy for opponent {j}")
        pj = validate_strategy(strategies[j], game.action_counts[j])
        vec += game.edge_payoffs[(i, j)] @ pj
    return vec


def pairwise_payoff_vector(game: PolymatrixGame, i: int, j: int, strategy_j) -> np.ndarray:
    """Expected payoff of agent i's actions from the single pair (i, j).

    Zero vector when (i, j) is not an interaction edge.
    """
    pj = validate_strategy(strategy_j, game.action_counts[j])
    mat = game.edge_payoffs.get((i, j))
    if mat is None:
        return np.zeros(game.action_counts[i])
    return mat @ pj


def generate_zero_sum(
    n: int,
    action_counts,
    payoff_range=DEFAULT_PAYOFF_RANGE,
    rng: np.random.Generator | None = None,
) -> PolymatrixGame:
    """Fully connected zero-sum game with i.i.d. uniform edge payoffs.

    For each unordered pair i < j the matrix B is sampled once and the
    reverse edge gets -B^T, which forces the profile-payoff sum to zero.
    """
    return _generate_pairwise(n, action_counts, payoff_range, rng, sign=-1.0, kind="zero_sum")


def generate_potential(
    n: int,
    action_counts,
    payoff_range=DEFAULT_PAYOFF_RANGE,
    rng: np.random.Generator | None = None,
) -> PolymatrixGame:
    """Fully connected potential game: the reverse edge gets B^T, so every
    pairwise interaction has identical interest and phi = half the payoff sum."""
    return _generate_pairwise(n, action_counts, payoff_range, rng, sign=1.0, kind="potential")


def _generate_pairwise(n, action_counts, payoff_range, rng, sign, kind):
    if n < 2:
        raise ValueError(f"need at least 2 agents, got {n}")
    if np.isscalar(action_counts):
        action_counts = (int(action_counts),) * n
    action_counts = tuple(int(m) for m in action_counts)
    if len(action_counts) != n:
        raise ValueError("action_counts length must equal n")
    lo, hi = float(payoff_range[0]), float(payoff_range[1])
    if not lo < hi:
        raise ValueError(f"empty payoff range {payoff_range}")
    if rng is None:
        rng = np.random.default_rng()
    payoffs = {}
    for i in range(n):
        for j in range(i + 1, n):
            mat = rng.uniform(lo, hi, size=(action_counts[i], action_counts[j]))
            payoffs[(i, j)] = mat
            payoffs[(j, i)] = sign * mat.T
    return PolymatrixGame(n, action_counts, payoffs, kind=kind)


def potential_value(game: PolymatrixGame, profile) -> float:
    """Potential at a joint action: half the sum of all agents' payoffs."""
    if game.kind != "potential":
        raise ValueError(f"potential_value needs a potential game, got kind={game.kind!r}")
    return 0.5 * sum(payoff(game, i, profile) for i in range(game.num_agents))


def iter_profiles(game: PolymatrixGame):
    return itertools.product(*(range(m) for m in game.action_counts))


def num_profiles(game: PolymatrixGame) -> int:
    out = 1
    for m in game.action_counts:
        out *= m
    return out


def _scan_profiles(game: PolymatrixGame, rng: np.random.Generator | None):
    """Every profile when the joint space is small, else a random sample."""
    if num_profiles(game) <= EXHAUSTIVE_PROFILE_LIMIT:
        yield from iter_profiles(game)
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        counts = game.action_counts
        for _ in range(EXHAUSTIVE_PROFILE_LIMIT):
            yield tuple(int(rng.integers(m)) for m in counts)


def check_zero_sum(game: PolymatrixGame, rng=None, tol: float = 1e-12) -> None:
    """Raise unless agent payoffs sum to zero on every scanned profile."""
    for profile in _scan_profiles(game, rng):
        total = sum(payoff(game, i, profile) for i in range(game.num_agents))
        if abs(total) > tol:
            raise ValueError(f"payoffs sum to {total!r} at profile {profile}")


def check_potential(game: PolymatrixGame, rng=None, tol: float = 1e-12) -> None:
    """Raise unless half-the-payoff-sum matches every unilateral deviation."""
    for profile in _scan_profiles(game, rng):
        base_phi = potential_value(game, profile)
        for i in range(game.num_agents):
            base_u = payoff(game, i, profile)
            for alt in range(game.action_counts[i]):
                if alt == profile[i]:
                    continue
                dev = list(profile)
                dev[i] = alt
                diff = (potential_value(game, dev) - base_phi) - (
                    payoff(game, i, dev) - base_u
                )
                if abs(diff) > tol:
                    raise ValueError(
                        f"potential identity off by {diff!r} at {profile}, agent {i} -> {alt}"
                    )


def check_kind(game: PolymatrixGame, rng=None) -> None:
    if game.kind == "zero_sum":
        check_zero_sum(game, rng)
    elif game.kind == "potential":
        check_potential(game, rng)

"""Batch experiment driver: trials over observability densities.

Each trial draws a fresh game and observability graph (unless a fixed game
is requested), runs the learning engine for the configured number of stages,
and records the equilibrium gap and estimate-consistency distance of the
step-size weighted empirical averages at geometrically spaced checkpoints.
Results are deterministic functions of (config, p, trial): trials are seeded
independently, so any level of parallelism yields byte-identical CSV output.
"""

from __future__ import annotations

import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    EmpiricalTracker,
    lyapunov_potential,
    lyapunov_zero_sum,
    q_diff,
    qre_gap,
)
from .dynamics import Engine, PowerSchedule
from .games import (
    DEFAULT_PAYOFF_RANGE,
    PolymatrixGame,
    generate_potential,
    generate_zero_sum,
)
from .graphs import erdos_renyi

THREADS_ENV = "POLYQ_THREADS"

GAME_KINDS = ("zero_sum", "potential")

# mixed into the seed stream when every trial shares one game
FIXED_GAME_TAG = 0xF12ED


def normalize_kind(kind: str) -> str:
    kind = kind.replace("-", "_")
    if kind not in GAME_KINDS:
        raise ValueError(f"kind must be one of {GAME_KINDS}, got {kind!r}")
    return kind


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment batch."""

    kind: str = "zero_sum"
    num_agents: int = 4
    num_actions: int = 3
    tau: float = 0.25
    p_values: tuple[float, ...] = (0.0, 0.5, 0.75, 1.0)
    num_trials: int = 50
    num_stages: int = 1_000_000
    schedule: PowerSchedule = field(default_factory=PowerSchedule)
    payoff_range: tuple[float, float] = DEFAULT_PAYOFF_RANGE
    master_seed: int = 0
    fixed_game: bool = False
    symmetric_obs: bool = False
    checkpoint_ratio: float = 1.25
    record_lyapunov: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        object.__setattr__(self, "p_values", tuple(float(p) for p in self.p_values))
        object.__setattr__(
            self, "payoff_range", (float(self.payoff_range[0]), float(self.payoff_range[1]))
        )
        if self.num_agents < 2:
            raise ValueError("need at least 2 agents")
        if self.num_actions < 2:
            raise ValueError("need at least 2 actions")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if self.num_trials < 1 or self.num_stages < 1:
            raise ValueError("num_trials and num_stages must be positive")
        if self.checkpoint_ratio <= 1.0:
            raise ValueError("checkpoint_ratio must exceed 1")
        for p in self.p_values:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"observation probability {p} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "num_agents": self.num_agents,
            "num_actions": self.num_actions,
            "tau": self.tau,
            "p_values": list(self.p_values),
            "num_trials": self.num_trials,
            "num_stages": self.num_stages,
            "schedule": self.schedule.to_dict(),
            "payoff_range": list(self.payoff_range),
            "master_seed": self.master_seed,
            "fixed_game": self.fixed_game,
            "symmetric_obs": self.symmetric_obs,
            "checkpoint_ratio": self.checkpoint_ratio,
            "record_lyapunov": self.record_lyapunov,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = {
            "kind",
            "num_agents",
            "num_actions",
            "tau",
            "p_values",
            "num_trials",
            "num_stages",
            "schedule",
            "payoff_range",
            "master_seed",
            "fixed_game",
            "symmetric_obs",
            "checkpoint_ratio",
            "record_lyapunov",
        }
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "schedule" in doc:
            doc["schedule"] = PowerSchedule.from_dict(doc["schedule"])
        if "p_values" in doc:
            doc["p_values"] = tuple(doc["p_values"])
        if "payoff_range" in doc:
            doc["payoff_range"] = tuple(doc["payoff_range"])
        return cls(**doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def checkpoint_stages(num_stages: int, ratio: float = 1.25) -> tuple[int, ...]:
    """Geometric stage grid from 1 (integer steps, given growth ratio), plus
    every power of 10 and the final stage."""
    if num_stages < 1:
        raise ValueError("num_stages must be positive")
    if ratio <= 1.0:
        raise ValueError("ratio must exceed 1")
    stages = set()
    s = 1
    while s <= num_stages:
        stages.add(s)
        s = max(s + 1, int(math.ceil(s * ratio)))
    d = 1
    while d <= num_stages:
        stages.add(d)
        d *= 10
    stages.add(num_stages)
    return tuple(sorted(stages))


def _p_bits(p: float) -> int:
    """The observation probability folded into seed entropy, bit-exactly."""
    return int(np.float64(p).view(np.uint64))


def trial_seed_sequence(master_seed: int, p: float, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, _p_bits(p), trial])


@dataclass
class TrialRecord:
    """Checkpoint metrics of one trial.

    ``lyapunov`` holds the candidate-function value at each checkpoint when
    its recording was enabled, else None.
    """

    p: float
    trial: int
    seed: int
    stages: np.ndarray
    qre_gap: np.ndarray
    q_diff: np.ndarray
    final_pis: np.ndarray
    last_clamp_stage: int
    lyapunov: np.ndarray | None = None


@dataclass(frozen=True)
class TrialFailure:
    p: float
    trial: int
    message: str


def make_trial_game(config: ExperimentConfig, game_ss) -> PolymatrixGame:
    rng = np.random.Generator(np.random.PCG64(game_ss))
    gen = generate_zero_sum if config.kind == "zero_sum" else generate_potential
    return gen(config.num_agents, config.num_actions, config.payoff_range, rng=rng)


def run_trial(config: ExperimentConfig, p: float, trial: int) -> TrialRecord:
    """Run one fully seeded trial and collect checkpoint metrics.

    The trial's seed stream depends only on (master_seed, p, trial); with
    ``fixed_game`` the game instead comes from a stream shared by every
    trial, so only the observability graph and play randomness vary.
    """
    ss = trial_seed_sequence(config.master_seed, p, trial)
    seed_fingerprint = int(ss.generate_state(1, np.uint64)[0])
    game_ss, graph_ss, engine_ss = ss.spawn(3)
    if config.fixed_game:
        game_ss = np.random.SeedSequence([config.master_seed, FIXED_GAME_TAG])
    game = make_trial_game(config, game_ss)
    graph = erdos_renyi(
        config.num_agents,
        p,
        np.random.Generator(np.random.PCG64(graph_ss)),
        symmetric=config.symmetric_obs,
    )
    engine = Engine(game, graph, tau=config.tau, schedule=config.schedule, seed=engine_ss)
    tracker = EmpiricalTracker.for_game(game)
    stages = checkpoint_stages(config.num_stages, config.checkpoint_ratio)
    lyap_fn = lyapunov_zero_sum if config.kind == "zero_sum" else lyapunov_potential
    gaps, dists, lyaps = [], [], []

    def record(eng: Engine):
        pis = tracker.strategies()
        qs = [eng.q_values(i) for i in range(game.num_agents)]
        gaps.append(qre_gap(game, pis, config.tau))
        dists.append(q_diff(game, qs, pis))
        if config.record_lyapunov:
            lyaps.append(lyap_fn(game, config.tau, qs, pis))

    engine.run(config.num_stages, tracker=tracker, recorder=record, record_at=stages)
    return TrialRecord(
        p=float(p),
        trial=int(trial),
        seed=seed_fingerprint,
        stages=np.array(stages, dtype=np.int64),
        qre_gap=np.array(gaps),
        q_diff=np.array(dists),
        final_pis=tracker.pis.copy(),
        last_clamp_stage=engine.last_clamp_stage,
        lyapunov=np.array(lyaps) if config.record_lyapunov else None,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[TrialRecord]
    failures: list[TrialFailure]

    @property
    def ok(self) -> bool:
        return not self.failures


def resolve_workers(requested: int | None = None, num_tasks: int | None = None) -> int:
    """Worker count: explicit request, else the POLYQ_THREADS cap (0 or unset
    means the CPU count), never more than the number of tasks."""
    if requested is not None:
        workers = int(requested)
    else:
        env = os.environ.get(THREADS_ENV, "").strip()
        workers = int(env) if env else 0
        if workers <= 0:
            workers = os.cpu_count() or 1
    workers = max(1, workers)
    if num_tasks is not None:
        workers = min(workers, max(1, num_tasks))
    return workers


def _safe_trial(config: ExperimentConfig, p: float, trial: int):
    try:
        return run_trial(config, p, trial), None
    except Exception as exc:
        detail = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return None, TrialFailure(p=float(p), trial=int(trial), message=detail)


def run_experiment(config: ExperimentConfig, max_workers: int | None = None) -> ExperimentResult:
    """Run all (p, trial) tasks, in parallel when more than one worker is
    available.  A failing trial is recorded and skipped; surviving records
    come back sorted by configured p order then trial index, independent of
    scheduling."""
    tasks = [(p, t) for p in config.p_values for t in range(config.num_trials)]
    workers = resolve_workers(max_workers, len(tasks))
    outcomes = []
    if workers == 1:
        for p, t in tasks:
            outcomes.append(_safe_trial(config, p, t))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_safe_trial, config, p, t) for p, t in tasks]
            outcomes = [f.result() for f in futures]
    records = [rec for rec, _ in outcomes if rec is not None]
    failures = [fail for _, fail in outcomes if fail is not None]
    order = {p: idx for idx, p in enumerate(config.p_values)}
    records.sort(key=lambda r: (order[r.p], r.trial))
    failures.sort(key=lambda f: (order[f.p], f.trial))
    return ExperimentResult(config=config, records=records, failures=failures)


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_trials_csv(path, records: list[TrialRecord]) -> None:
    """One row per (trial, checkpoint): p,trial,seed,stage,qre_gap,q_diff."""
    lines = ["p,trial,seed,stage,qre_gap,q_diff"]
    for rec in records:
        for s in range(rec.stages.shape[0]):
            lines.append(
                ",".join(
                    (
                        _fmt(rec.p),
                        str(rec.trial),
                        str(rec.seed),
                        str(int(rec.stages[s])),
                        _fmt(rec.qre_gap[s]),
                        _fmt(rec.q_diff[s]),
                    )
                )
            )
    Path(path).write_text("\n".join(lines) + "\n")


def write_lyapunov_csv(path, records: list[TrialRecord]) -> None:
    """One row per (trial, checkpoint) with the recorded candidate value;
    records without Lyapunov samples are skipped."""
    lines = ["p,trial,stage,V"]
    for rec in records:
        if rec.lyapunov is None:
            continue
        for s in range(rec.stages.shape[0]):
            lines.append(
                ",".join(
                    (
                        _fmt(rec.p),
                        str(rec.trial),
                        str(int(rec.stages[s])),
                        _fmt(rec.lyapunov[s]),
                    )
                )
            )
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary_csv(path, records: list[TrialRecord]) -> None:
    """Across-trial mean and population std per (p, stage, metric)."""
    lines = ["p,stage,metric,mean,std"]
    seen_p = []
    for rec in records:
        if rec.p not in seen_p:
            seen_p.append(rec.p)
    for p in seen_p:
        group = [r for r in records if r.p == p]
        stages = group[0].stages
        for r in group:
            if not np.array_equal(r.stages, stages):
                raise ValueError("records for one p disagree on checkpoint stages")
        for s in range(stages.shape[0]):
            for metric, attr in (("qre_gap", "qre_gap"), ("q_diff", "q_diff")):
                vals = np.array([getattr(r, attr)[s] for r in group])
                lines.append(
                    ",".join(
                        (
                            _fmt(p),
                            str(int(stages[s])),
                            metric,
                            _fmt(float(vals.mean())),
                            _fmt(float(vals.std(ddof=0))),
                        )
                    )
                )
    Path(path).write_text("\n".join(lines) + "\n")


def write_outputs(result: ExperimentResult, out_dir) -> dict:
    """Write config.json, trials.csv and summary.csv (plus lyapunov.csv when
    candidate values were recorded); returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "config": out / "config.json",
        "trials": out / "trials.csv",
        "summary": out / "summary.csv",
    }
    result.config.save(paths["config"])
    write_trials_csv(paths["trials"], result.records)
    write_summary_csv(paths["summary"], result.records)
    if any(rec.lyapunov is not None for rec in result.records):
        paths["lyapunov"] = out / "lyapunov.csv"
        write_lyapunov_csv(paths["lyapunov"], result.records)
    return paths

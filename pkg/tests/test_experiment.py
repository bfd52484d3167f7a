"""Tests for the batch experiment driver: seeding, determinism, outputs."""

import json
import math

import numpy as np
import pytest

from polyq import (
    ExperimentConfig,
    checkpoint_stages,
    run_experiment,
    run_trial,
    trial_seed_sequence,
    write_outputs,
)
from polyq import experiment
from polyq.experiment import resolve_workers, write_summary_csv, write_trials_csv


def _small_config(**overrides):
    base = dict(
        kind="zero_sum",
        num_agents=2,
        num_actions=2,
        tau=0.25,
        p_values=(0.0, 1.0),
        num_trials=2,
        num_stages=300,
        master_seed=3,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_checkpoint_stages_properties():
    stages = checkpoint_stages(1_000_000)
    assert stages[0] == 1
    assert stages[-1] == 1_000_000
    assert len(stages) == 64
    for d in (1, 10, 100, 1000, 10_000, 100_000, 1_000_000):
        assert d in stages
    assert list(stages) == sorted(set(stages))
    # geometric growth with an integer floor of one stage per point
    for a, b in zip(stages, stages[1:]):
        assert b <= max(a + 1, math.ceil(a * 1.25))

    assert checkpoint_stages(1) == (1,)
    assert checkpoint_stages(7) == (1, 2, 3, 4, 5, 7)
    with pytest.raises(ValueError):
        checkpoint_stages(0)
    with pytest.raises(ValueError):
        checkpoint_stages(100, ratio=1.0)


def test_trial_seeds_distinct_and_bit_exact_in_p():
    base = trial_seed_sequence(0, 0.5, 0).generate_state(2)
    for other in (
        trial_seed_sequence(0, 0.5, 1),
        trial_seed_sequence(0, 0.25, 0),
        trial_seed_sequence(1, 0.5, 0),
        trial_seed_sequence(0, 0.5000000000000001, 0),
    ):
        assert not np.array_equal(base, other.generate_state(2))
    again = trial_seed_sequence(0, 0.5, 0).generate_state(2)
    assert np.array_equal(base, again)


def test_run_trial_is_deterministic():
    cfg = _small_config()
    a = run_trial(cfg, 0.5, 1)
    b = run_trial(cfg, 0.5, 1)
    assert a.seed == b.seed
    assert np.array_equal(a.stages, b.stages)
    assert np.array_equal(a.qre_gap, b.qre_gap)
    assert np.array_equal(a.q_diff, b.q_diff)
    assert np.array_equal(a.final_pis, b.final_pis)
    assert a.last_clamp_stage == b.last_clamp_stage
    assert a.seed == int(trial_seed_sequence(3, 0.5, 1).generate_state(1, np.uint64)[0])
    assert np.array_equal(a.stages, np.array(checkpoint_stages(300)))


def test_fixed_game_shares_one_game(monkeypatch):
    captured = []
    orig = experiment.make_trial_game

    def capture(config, game_ss):
        game = orig(config, game_ss)
        captured.append(game.payoff_tensor().copy())
        return game

    monkeypatch.setattr(experiment, "make_trial_game", capture)

    cfg = _small_config(fixed_game=True, num_stages=50)
    run_experiment(cfg, max_workers=1)
    assert len(captured) == 4
    assert all(np.array_equal(t, captured[0]) for t in captured[1:])

    captured.clear()
    run_experiment(_small_config(num_stages=50), max_workers=1)
    assert any(not np.array_equal(t, captured[0]) for t in captured[1:])


def test_records_follow_configured_p_order():
    cfg = _small_config(p_values=(1.0, 0.0), num_stages=50)
    result = run_experiment(cfg, max_workers=1)
    assert [(r.p, r.trial) for r in result.records] == [
        (1.0, 0),
        (1.0, 1),
        (0.0, 0),
        (0.0, 1),
    ]
    assert result.ok


def test_worker_count_does_not_change_outputs(tmp_path):
    cfg = _small_config()
    serial = run_experiment(cfg, max_workers=1)
    parallel = run_experiment(cfg, max_workers=2)
    dir_a = tmp_path / "serial"
    dir_b = tmp_path / "parallel"
    write_outputs(serial, dir_a)
    write_outputs(parallel, dir_b)
    for name in ("config.json", "trials.csv", "summary.csv"):
        assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()


def test_trial_failures_are_recorded(monkeypatch):
    orig = experiment.run_trial

    def flaky(config, p, trial):
        if p == 1.0 and trial == 1:
            raise RuntimeError("boom")
        return orig(config, p, trial)

    monkeypatch.setattr(experiment, "run_trial", flaky)
    cfg = _small_config(num_stages=50)
    result = run_experiment(cfg, max_workers=1)
    assert not result.ok
    assert len(result.records) == 3
    assert len(result.failures) == 1
    failure = result.failures[0]
    assert failure.p == 1.0 and failure.trial == 1
    assert "boom" in failure.message


def test_csv_values_round_trip(tmp_path):
    cfg = _small_config()
    result = run_experiment(cfg, max_workers=1)
    paths = write_outputs(result, tmp_path)

    lines = paths["trials"].read_text().splitlines()
    assert lines[0] == "p,trial,seed,stage,qre_gap,q_diff"
    stages = checkpoint_stages(cfg.num_stages)
    assert len(lines) == 1 + len(cfg.p_values) * cfg.num_trials * len(stages)
    row = 1
    for rec in result.records:
        for s in range(rec.stages.shape[0]):
            p, trial, seed, stage, gap, dist = lines[row].split(",")
            assert float(p) == rec.p
            assert int(trial) == rec.trial
            assert int(seed) == rec.seed
            assert int(stage) == rec.stages[s]
            assert float(gap) == rec.qre_gap[s]
            assert float(dist) == rec.q_diff[s]
            row += 1

    assert ExperimentConfig.load(paths["config"]) == cfg


def test_summary_matches_population_statistics(tmp_path):
    cfg = _small_config(num_trials=3, num_stages=100)
    result = run_experiment(cfg, max_workers=1)
    path = tmp_path / "summary.csv"
    write_summary_csv(path, result.records)
    lines = path.read_text().splitlines()
    assert lines[0] == "p,stage,metric,mean,std"

    table = {}
    for line in lines[1:]:
        p, stage, metric, mean, std = line.split(",")
        table[(float(p), int(stage), metric)] = (float(mean), float(std))

    stages = checkpoint_stages(cfg.num_stages)
    assert len(table) == len(cfg.p_values) * len(stages) * 2
    for p in cfg.p_values:
        group = [r for r in result.records if r.p == p]
        for s, stage in enumerate(stages):
            gaps = np.array([r.qre_gap[s] for r in group])
            mean, std = table[(p, stage, "qre_gap")]
            assert mean == float(gaps.mean())
            assert std == float(gaps.std(ddof=0))
            dists = np.array([r.q_diff[s] for r in group])
            mean, std = table[(p, stage, "q_diff")]
            assert mean == float(dists.mean())
            assert std == float(dists.std(ddof=0))


def test_summary_rejects_mismatched_stage_grids(tmp_path):
    cfg = _small_config(num_stages=50)
    rec_a = run_trial(cfg, 0.5, 0)
    rec_b = run_trial(cfg, 0.5, 1)
    rec_b.stages = rec_b.stages[:-1]
    rec_b.qre_gap = rec_b.qre_gap[:-1]
    rec_b.q_diff = rec_b.q_diff[:-1]
    with pytest.raises(ValueError):
        write_summary_csv(tmp_path / "bad.csv", [rec_a, rec_b])
    # trials.csv has no such constraint, rows just vary per trial
    write_trials_csv(tmp_path / "ok.csv", [rec_a, rec_b])


def test_config_round_trip_and_normalization(tmp_path):
    cfg = ExperimentConfig(kind="zero-sum", p_values=[0, 1], num_trials=5, num_stages=10)
    assert cfg.kind == "zero_sum"
    assert cfg.p_values == (0.0, 1.0)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    path = tmp_path / "config.json"
    cfg.save(path)
    assert ExperimentConfig.load(path) == cfg
    doc = json.loads(path.read_text())
    assert doc["kind"] == "zero_sum"
    assert doc["schedule"] == {"c": 1.0, "k0": 2.0, "rho": 0.6}


def test_lyapunov_recording(tmp_path):
    cfg = _small_config(num_trials=1, num_stages=200, p_values=(1.0,), record_lyapunov=True)
    result = run_experiment(cfg, max_workers=1)
    rec = result.records[0]
    assert rec.lyapunov is not None
    assert rec.lyapunov.shape == rec.stages.shape
    assert np.all(np.isfinite(rec.lyapunov))
    # the candidate value shrinks as play settles
    assert rec.lyapunov[-1] < rec.lyapunov[0]

    paths = write_outputs(result, tmp_path)
    lines = paths["lyapunov"].read_text().splitlines()
    assert lines[0] == "p,trial,stage,V"
    assert len(lines) == 1 + len(rec.stages)
    got = [float(line.split(",")[3]) for line in lines[1:]]
    assert np.array_equal(np.array(got), rec.lyapunov)

    plain = run_trial(_small_config(), 1.0, 0)
    assert plain.lyapunov is None


def test_checkpoint_ratio_is_configurable():
    coarse = _small_config(num_stages=10_000, checkpoint_ratio=2.0)
    fine = _small_config(num_stages=10_000, checkpoint_ratio=1.1)
    rec_coarse = run_trial(coarse, 1.0, 0)
    rec_fine = run_trial(fine, 1.0, 0)
    assert rec_coarse.stages.shape[0] < rec_fine.stages.shape[0]
    assert np.array_equal(rec_coarse.stages, np.array(checkpoint_stages(10_000, 2.0)))


def test_empty_records_yield_header_only_files(tmp_path):
    write_trials_csv(tmp_path / "trials.csv", [])
    write_summary_csv(tmp_path / "summary.csv", [])
    assert (tmp_path / "trials.csv").read_text() == "p,trial,seed,stage,qre_gap,q_diff\n"
    assert (tmp_path / "summary.csv").read_text() == "p,stage,metric,mean,std\n"


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(kind="coordination")
    with pytest.raises(ValueError):
        ExperimentConfig(num_agents=1)
    with pytest.raises(ValueError):
        ExperimentConfig(num_actions=1)
    with pytest.raises(ValueError):
        ExperimentConfig(tau=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig(num_trials=0)
    with pytest.raises(ValueError):
        ExperimentConfig(p_values=(0.5, 1.5))
    with pytest.raises(ValueError):
        ExperimentConfig(checkpoint_ratio=1.0)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"kind": "zero_sum", "bogus": 1})


def test_resolve_workers(monkeypatch):
    assert resolve_workers(5) == 5
    assert resolve_workers(5, num_tasks=2) == 2
    assert resolve_workers(0) == 1
    assert resolve_workers(-3, num_tasks=10) == 1

    monkeypatch.setenv("POLYQ_THREADS", "3")
    assert resolve_workers(None, num_tasks=100) == 3
    assert resolve_workers(None, num_tasks=2) == 2

    monkeypatch.setenv("POLYQ_THREADS", "0")
    import os

    assert resolve_workers(None, num_tasks=10_000) == min(os.cpu_count() or 1, 10_000)

    monkeypatch.delenv("POLYQ_THREADS")
    assert resolve_workers(None, num_tasks=1) == 1

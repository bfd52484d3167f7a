"""Equilibrium solver, metrics, Lyapunov values, empirical tracker."""

import math

import numpy as np
import pytest

from polyq.analysis import (
    EmpiricalTracker,
    entropy,
    estimate_residual,
    expected_payoff,
    expected_potential,
    lyapunov_potential,
    lyapunov_zero_sum,
    lyapunov_zero_sum_terms,
    q_diff,
    qre_gap,
    smooth_value,
    solve_qre,
)
from polyq.dynamics import smoothed_best_response
from polyq.games import (
    PolymatrixGame,
    expected_payoff_vector,
    generate_potential,
    generate_zero_sum,
    iter_profiles,
    payoff,
    potential_value,
)


def matching_pennies(scale=1.0):
    mat = scale * np.array([[1.0, -1.0], [-1.0, 1.0]])
    return PolymatrixGame(2, (2, 2), {(0, 1): mat, (1, 0): -mat.T}, kind="zero_sum")


def test_smooth_value_two_action_closed_form():
    q = np.array([0.8, -0.4])
    tau = 0.25
    want = tau * math.log(math.exp(q[0] / tau) + math.exp(q[1] / tau))
    assert smooth_value(q, tau) == pytest.approx(want, abs=1e-13)


def test_smooth_value_equals_max_plus_entropy_of_softmax():
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = rng.normal(size=4)
        tau = float(rng.uniform(0.1, 2.0))
        br = smoothed_best_response(q, tau)
        # variational identity: value = br . q + tau H(br)
        assert smooth_value(q, tau) == pytest.approx(
            float(br @ q) + tau * entropy(br), abs=1e-10
        )
        assert smooth_value(q, tau) >= q.max()
        assert smooth_value(q, tau) <= q.max() + tau * math.log(q.size)


def test_smooth_value_overflow_safe():
    assert smooth_value(np.array([1e6, 0.0]), 0.25) == pytest.approx(1e6)
    with pytest.raises(ValueError):
        smooth_value(np.array([1.0]), -1.0)


def test_entropy_basics():
    assert entropy(np.array([0.25, 0.25, 0.25, 0.25])) == pytest.approx(math.log(4))
    assert entropy(np.array([1.0, 0.0])) == 0.0
    assert entropy(np.array([0.5, 0.5])) == pytest.approx(math.log(2))


def test_solve_qre_matching_pennies_uniform():
    game = matching_pennies()
    res = solve_qre(game, 0.25)
    assert res.converged
    for s in res.strategies:
        assert np.allclose(s, 0.5, atol=1e-9)
    assert qre_gap(game, res.strategies, 0.25) < 1e-12


def test_solve_qre_gap_small_on_random_games():
    for seed in range(5):
        game = generate_zero_sum(3, 3, (-0.4, 0.4), rng=np.random.default_rng(seed))
        res = solve_qre(game, 0.25)
        assert res.converged, f"seed {seed} residual {res.residual}"
        assert qre_gap(game, res.strategies, 0.25) < 1e-8
        assert res.residual <= 1e-10


def test_solve_qre_reports_non_convergence():
    # undamped iteration oscillates for a steep two-action game off-equilibrium
    game = matching_pennies(scale=4.0)
    init = [np.array([0.9, 0.1]), np.array([0.9, 0.1])]
    res = solve_qre(game, 0.25, damping=1.0, max_iters=200, init=init)
    assert not res.converged
    assert res.iterations == 200
    assert res.residual > 1e-10
    with pytest.raises(ValueError):
        solve_qre(game, 0.25, damping=0.0)


def test_solve_qre_respects_init_and_tolerance():
    game = matching_pennies()
    res = solve_qre(game, 0.25, init=[np.array([0.5, 0.5]), np.array([0.5, 0.5])])
    assert res.converged
    assert res.iterations == 1  # already at the fixed point


def test_qre_gap_positive_away_from_equilibrium():
    game = generate_zero_sum(3, 3, rng=np.random.default_rng(1))
    pis = [np.array([1.0, 0.0, 0.0])] * 3
    assert qre_gap(game, pis, 0.25) > 0


def test_q_diff_zero_at_consistent_estimates():
    game = generate_zero_sum(4, 3, rng=np.random.default_rng(2))
    rng = np.random.default_rng(3)
    pis = [rng.dirichlet(np.ones(3)) for _ in range(4)]
    qs = [expected_payoff_vector(game, i, pis) for i in range(4)]
    assert q_diff(game, qs, pis) == 0.0
    qs[0] = qs[0] + np.array([3.0, 0.0, 0.0])
    assert q_diff(game, qs, pis) == pytest.approx(3.0 / 4.0)
    assert estimate_residual(game, qs, pis) == pytest.approx(3.0)


def test_expected_payoff_and_potential_match_enumeration():
    game = generate_potential(3, (2, 3, 2), rng=np.random.default_rng(4))
    rng = np.random.default_rng(5)
    pis = [rng.dirichlet(np.ones(m)) for m in game.action_counts]
    want_u = np.zeros(3)
    want_phi = 0.0
    for profile in iter_profiles(game):
        w = 1.0
        for j, a in enumerate(profile):
            w *= pis[j][a]
        for i in range(3):
            want_u[i] += w * payoff(game, i, profile)
        want_phi += w * potential_value(game, profile)
    for i in range(3):
        assert expected_payoff(game, i, pis) == pytest.approx(want_u[i], abs=1e-12)
    assert expected_potential(game, pis) == pytest.approx(want_phi, abs=1e-12)


def test_expected_potential_requires_potential_kind():
    game = generate_zero_sum(3, 2, rng=np.random.default_rng(6))
    with pytest.raises(ValueError):
        expected_potential(game, [np.full(2, 0.5)] * 3)


def test_lyapunov_zero_sum_nonnegative_and_zero_at_qre():
    rng = np.random.default_rng(7)
    for seed in range(5):
        game = generate_zero_sum(3, 3, (-0.4, 0.4), rng=np.random.default_rng(seed))
        # nonnegative at arbitrary states
        for _ in range(10):
            qs = [rng.normal(size=3) for _ in range(3)]
            pis = [rng.dirichlet(np.ones(3)) for _ in range(3)]
            assert lyapunov_zero_sum(game, 0.25, qs, pis) >= -1e-12
        res = solve_qre(game, 0.25)
        assert res.converged
        qs_star = [expected_payoff_vector(game, i, res.strategies) for i in range(3)]
        v_star = lyapunov_zero_sum(game, 0.25, qs_star, res.strategies)
        assert abs(v_star) < 1e-8
        terms = lyapunov_zero_sum_terms(game, 0.25, qs_star, res.strategies)
        assert len(terms) == 3
        assert sum(terms) == pytest.approx(v_star)


def test_lyapunov_potential_at_equilibrium_value():
    game = generate_potential(3, 3, (-0.4, 0.4), rng=np.random.default_rng(8))
    res = solve_qre(game, 0.25)
    assert res.converged
    qs_star = [expected_payoff_vector(game, i, res.strategies) for i in range(3)]
    want = -expected_potential(game, res.strategies) - 0.25 * sum(
        entropy(s) for s in res.strategies
    )
    assert lyapunov_potential(game, 0.25, qs_star, res.strategies) == pytest.approx(
        want, abs=1e-10
    )
    # the consistency penalty adds twice the summed per-agent distances:
    # each agent's estimate moves 0.5 in every entry, a norm of sqrt(0.75)
    qs_off = [q + 0.5 for q in qs_star]
    off = lyapunov_potential(game, 0.25, qs_off, res.strategies)
    assert off == pytest.approx(want + 2.0 * 3 * math.sqrt(3 * 0.25), abs=1e-10)


def test_empirical_tracker_update_and_views():
    game = generate_zero_sum(3, (2, 3, 2), rng=np.random.default_rng(9))
    tracker = EmpiricalTracker.for_game(game)
    assert np.allclose(tracker.pis[0, :2], 0.5)
    assert np.allclose(tracker.pis[1, :3], 1 / 3)
    assert tracker.pis[0, 2] == 0.0
    tracker.update((1, 2, 0), 0.5)
    assert np.allclose(tracker.pis[0, :2], [0.25, 0.75])
    assert np.allclose(tracker.pis[1, :3], [1 / 6, 1 / 6, 4 / 6])
    assert tracker.stage == 1
    strategies = tracker.strategies()
    assert [len(s) for s in strategies] == [2, 3, 2]
    strategies[0][0] = 99.0  # copies, not views
    assert tracker.pis[0, 0] == 0.25
    with pytest.raises(ValueError):
        tracker.update((2, 0, 0), 0.5)

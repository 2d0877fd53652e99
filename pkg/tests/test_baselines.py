import math

import numpy as np
import pytest

from cascade_rl.baselines import (
    AdaptVI,
    AtomicEstimatorState,
    adapt_bpi_run,
    adapt_vi_run,
    atomic_bpi_bonus,
    atomic_vi_bonus,
    cascading_vi_bonus_run,
    cascading_vi_oracle_run,
)
from cascade_rl.bestperm import EnumerationCapError, action_table, brute_force_best_perm_counted
from cascade_rl.cascading_bpi import policy_gap, run_bpi
from cascade_rl.cascading_vi import CascadingVI, EstimatorState, run_regret
from cascade_rl.env import make_rng
from cascade_rl.instances import build_synthetic
from cascade_rl.model import action_space_size

from _support import random_mdp


class TestBonuses:
    def test_regret_bonus_value(self):
        b = atomic_vi_bonus(100, np.array([0.5, 0.5]), np.array([0.0, 2.0]), 3, 1.0)
        assert b == pytest.approx(0.2 + 0.2 + 0.15, abs=1e-12)

    def test_identification_bonus_value(self):
        b = atomic_bpi_bonus(400, np.array([0.5, 0.5]), np.array([0.0, 2.0]), np.zeros(2), 2, 1.0, 1.0)
        assert b == pytest.approx(0.2 + 0.1 + 0.15 + 1.0, abs=1e-12)

    def test_unvisited(self):
        assert atomic_vi_bonus(0, np.ones(1), np.ones(1), 4, 1.0) == 4.0
        assert atomic_bpi_bonus(0, np.ones(1), np.ones(1), np.zeros(1), 4, 1.0, 1.0) == 4.0


def test_oracle_variant_reproduces_cascading_trace():
    for mdp in (build_synthetic(3, 4, 2), random_mdp(np.random.default_rng(5), num_items=4, max_list_len=3)):
        a = run_regret(mdp, 600, 0.01, seed=2)
        b = cascading_vi_oracle_run(mdp, 600, 0.01, seed=2)
        assert b.algorithm == "cascading-vi-oracle"
        np.testing.assert_array_equal(a.inst_regret, b.inst_regret)
        np.testing.assert_array_equal(a.optimistic_value, b.optimistic_value)


def test_two_single_item_lists_are_scored_by_both_oracles():
    _, _, evaluated = brute_force_best_perm_counted([0.3, 0.6, 1.0], [0.1, 0.5, 0.0], 1)
    assert evaluated == action_space_size(2, 1) == 2


def test_bonus_variant_name():
    mdp = build_synthetic(3, 4, 2)
    trace = cascading_vi_bonus_run(mdp, 10, 0.01, seed=0)
    assert trace.algorithm == "cascading-vi-bonus"


class TestAdaptVI:
    def test_touches_every_q_entry(self):
        mdp = build_synthetic(3, 4, 2)
        trace = adapt_vi_run(mdp, 5, 0.01, seed=0)
        size = action_space_size(4, 2)
        assert np.all(trace.oracle_calls == mdp.num_states * mdp.horizon * size)
        assert trace.algorithm == "adapt-vi"

    def test_single_item_matches_cascading(self):
        mdp = random_mdp(np.random.default_rng(2), num_states=2, num_items=1, max_list_len=1, horizon=2)
        a = adapt_vi_run(mdp, 50, 0.1, seed=0)
        b = run_regret(mdp, 50, 0.1, seed=0)
        np.testing.assert_array_equal(a.inst_regret, b.inst_regret)

    def test_sees_only_step_rewards_and_transitions(self):
        mdp = build_synthetic(3, 3, 2)
        learner = AdaptVI(mdp, 100, 0.01)
        rng = make_rng(0)
        for k in range(1, 101):
            learner.plan(k)
            learner.play(rng)
        est = learner.estimates
        assert set(vars(est)) == {"n", "reward_sum", "r_hat", "count_p", "p_hat"}
        assert est.n.sum() == 100 * mdp.horizon
        np.testing.assert_array_equal(est.count_p.sum(axis=2), est.n)
        visited = est.n > 0
        assert np.all(est.r_hat[visited] <= 1.0) and np.all(est.r_hat[~visited] == 0.0)

    def test_optimistic(self):
        mdp = build_synthetic(3, 3, 2)
        trace = adapt_vi_run(mdp, 300, 0.01, seed=1)
        assert np.all(trace.optimistic_value >= trace.optimal_value - 1e-9)

    def test_enumeration_cap(self):
        with pytest.raises(EnumerationCapError):
            adapt_vi_run(build_synthetic(3, 4, 3), 5, 0.01, seed=0, cap=10)

    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError):
            AdaptVI(build_synthetic(2, 2, 1), 5, 0.0)


def test_memory_ratio():
    S, N, m = 9, 8, 3
    size = action_space_size(N, m)
    atomic = AtomicEstimatorState.empty(S, size).num_entries
    cascading = EstimatorState.empty(S, N).num_entries
    assert atomic == 3 * S * size + 2 * S * size * S
    assert cascading == 3 * S * N + S * (N + 1) + 2 * S * (N + 1) * S
    assert atomic / cascading == pytest.approx((3 + 2 * S) * size / (3 * N + (N + 1) * (1 + 2 * S)))
    assert atomic / cascading > 30


class TestAdaptBPI:
    def test_stops_immediately_when_epsilon_is_the_horizon(self):
        result = adapt_bpi_run(build_synthetic(3, 3, 2), 3.0, 0.1, seed=0)
        assert (result.episodes_used, result.terminated) == (1, True)

    def test_single_item(self):
        # one legal list: both learners can only return it; their bonus
        # formulas differ, so the stopping times differ as well
        mdp = random_mdp(np.random.default_rng(2), num_states=2, num_items=1, max_list_len=1, horizon=2)
        a = adapt_bpi_run(mdp, 1.5, 0.1, seed=0)
        b = run_bpi(mdp, 1.5, 0.1, seed=0)
        assert a.terminated and b.terminated
        assert a.policy == b.policy
        assert policy_gap(mdp, a.policy) == 0.0

    def test_cap(self):
        result = adapt_bpi_run(build_synthetic(5, 4, 3), 0.5, 0.005, seed=0, episode_cap=20)
        assert (result.episodes_used, result.terminated, result.algorithm) == (20, False, "adapt-bpi")

    def test_reproducible(self):
        mdp = random_mdp(np.random.default_rng(4), num_states=2, num_items=2, max_list_len=1, horizon=1)
        a = adapt_bpi_run(mdp, 0.5, 0.1, seed=3)
        b = adapt_bpi_run(mdp, 0.5, 0.1, seed=3)
        assert a.terminated and a.episodes_used == b.episodes_used and a.policy == b.policy
        assert policy_gap(mdp, a.policy) <= 0.5

    @pytest.mark.parametrize("kwargs", [dict(epsilon=-1.0), dict(delta=0.0), dict(episode_cap=0)])
    def test_rejects(self, kwargs):
        args = dict(mdp=build_synthetic(2, 2, 1), epsilon=0.5, delta=0.1, seed=0)
        args.update(kwargs)
        with pytest.raises(ValueError):
            adapt_bpi_run(**args)


def test_action_table_matches_learner_indices():
    mdp = build_synthetic(3, 3, 2)
    learner = AdaptVI(mdp, 10, 0.1)
    items, lengths = action_table(3, 2)
    np.testing.assert_array_equal(learner.actions, items)
    assert learner.num_actions == action_space_size(3, 2)
    assert math.isfinite(learner.log_term)

"""Worked examples for each operation, including the small hand-checkable cases."""

import math

import numpy as np
import pytest

import oracles
from strat_bandit.algorithms import (
    UCB,
    AllArmsBlocked,
    PolicySpec,
    PolicyState,
    PolicyStreams,
    eps_greedy_select,
    eps_schedule,
    ucb_index,
)
from strat_bandit.core import arm, build_instance
from strat_bandit.engine import (
    estimate_sharp_adaptivity,
    monte_carlo,
    regret_ordinary,
    run_episode,
    verify_fata,
)
from strat_bandit.mechanism import SpPiConfig, blocking_check, reward_phase_rounds, run_sp_pi, second_highest
from strat_bandit.strategies import (
    AbsorbAll,
    ConstantTarget,
    HonestPassive,
    Linear,
    SpPiEquilibrium,
    TopPerformance,
    check_condition_5_1,
    compute_sustainability,
)
from strat_bandit.core import ConstraintViolation
from strat_bandit.engine import mixture_check


def point(mean, cap=1.0, honest=True, cost=None):
    d = {"mean": mean, "cap": cap, "honest": honest, "distribution": {"type": "discrete_finite", "atoms": [[mean, 1.0]]}}
    if cost is not None:
        d["cost_coefficient"] = cost
    return d


def bern(mean, cap=1.0, honest=True):
    return {"mean": mean, "cap": cap, "honest": honest}


def make(n, *arms):
    return build_instance({"horizon": n, "arms": list(arms)})


class TestPolicies:
    def test_bonus_vanishes(self):
        assert ucb_index(0.4, 10**15, 100) == pytest.approx(0.4, abs=1e-6)

    def test_schedule_vanishes(self):
        assert eps_schedule(10**30, 2) < 1e-7

    def test_uniform_exploration_frequency(self):
        k, rounds = 3, 10**5
        streams = PolicyStreams(11, k)
        state = PolicyState(k, 10**6, counts=[1] * k, sums=[0.9, 0.1, 0.5])
        picks = np.bincount([eps_greedy_select(state, t, 1.0, streams) for t in range(1, rounds + 1)], minlength=k)
        assert np.all(np.abs(picks / rounds - 1 / k) <= 0.01)

    def test_pure_exploitation(self):
        streams = PolicyStreams(2, 3)
        state = PolicyState(3, 10**4, counts=[4, 4, 4], sums=[3.0, 1.0, 2.0])
        assert {eps_greedy_select(state, t, 0.0, streams) for t in range(1, 500)} == {0}

    def test_tied_exploitation_is_fair(self):
        streams = PolicyStreams(4, 2)
        state = PolicyState(2, 10**5, counts=[3, 3], sums=[1.5, 1.5])
        picks = [eps_greedy_select(state, t, 0.0, streams) for t in range(1, 10**4 + 1)]
        assert abs(np.mean(picks) - 0.5) <= 0.02

    def test_blocked_arm_frozen(self):
        pol = UCB(3, 1000)
        for t in range(1, 4):
            a = pol.select(t)
            pol.observe(a, 0.5)
        pol.block(2)
        mean_before = pol.state.mean(2)
        for t in range(4, 104):
            a = pol.select(t)
            pol.observe(a, 1.0)
        assert pol.state.counts[2] == 1 and pol.state.mean(2) == mean_before
        pol.block(0)
        pol.block(1)
        with pytest.raises(AllArmsBlocked):
            pol.select(104)


class TestStrategies:
    def test_passive_history_independent_and_costless(self):
        inst = make(2000, bern(0.6, 0.8), bern(0.5, 1.0, False))
        out = run_episode(inst, PolicySpec(), [HonestPassive(), HonestPassive()], 1)
        assert np.all(out.round_log.effort == 0.0) and np.all(out.effort == 0.0)
        assert np.array_equal(out.round_log.raw, out.round_log.delivered)

    def test_top_performance_effort_identity(self):
        inst = make(3000, bern(0.6, 0.8), bern(0.3, 1.0, False))
        out = run_episode(inst, PolicySpec(), [TopPerformance(), TopPerformance()], 2)
        log = out.round_log
        for a, spec in enumerate(inst.arms):
            mask = log.arm == a
            assert out.effort[a] == pytest.approx(mask.sum() * spec.cap - log.raw[mask].sum(), abs=1e-9)
            assert np.all(log.effort[mask] >= 0)

    def test_absorb_utility_identity(self):
        inst = build_instance({"horizon": 3000, "arms": [bern(0.6, 0.8), {**bern(0.5, 1.0, False), "cost_coefficient": 2.0}]})
        out = run_episode(inst, PolicySpec(), [HonestPassive(), AbsorbAll()], 3)
        mask = out.round_log.arm == 1
        assert out.utility[1] == pytest.approx(out.pulls[1] + 2.0 * out.round_log.raw[mask].sum())

    def test_absorb_on_honest_arm_at_runtime(self):
        from strat_bandit.core import OwnHistory
        from strat_bandit.rng import CounterStream, Stream

        with pytest.raises(ConstraintViolation):
            AbsorbAll()(arm(0, 0.5, 1.0, True), OwnHistory(), 0.7, CounterStream(0, Stream.STRATEGY, 0))

    def test_constant_at_cap_equals_top_performance(self):
        inst = make(2000, bern(0.6, 0.8), bern(0.3, 0.9, False))
        a = run_episode(inst, PolicySpec(), [HonestPassive(), ConstantTarget(0.9)], 5)
        b = run_episode(inst, PolicySpec(), [HonestPassive(), TopPerformance()], 5)
        assert a == b

    def test_constant_at_degenerate_mean_is_effortless(self):
        inst = make(500, point(0.4), bern(0.3, 1.0, False))
        out = run_episode(inst, PolicySpec(), [ConstantTarget(0.4), HonestPassive()], 0)
        assert np.all(out.round_log.effort[out.round_log.arm == 0] == 0.0)

    def test_mixture_tighter_tolerance(self):
        spec = arm(0, 0.575, 1.0, True, atoms=[(0.2, 0.5), (0.95, 0.5)])
        assert abs(mixture_check(spec, 0.9, pulls=10**6).empirical_mean - 0.9) <= 0.001


class TestSustainability:
    def test_identity_cost_degenerate_is_sustainable(self):
        rep = compute_sustainability(arm(0, 0.4, 0.8, atoms=[(0.4, 1.0)]))
        assert rep.sustainable and rep.m_f == pytest.approx(0.8)
        for x, g in rep.g_table:
            assert g == pytest.approx(x - 0.4)

    def test_vanishing_cost(self):
        rep = compute_sustainability(arm(0, 0.1, 1.0, cost=1e-9))
        assert rep.sustainable

    def test_cost_function_override(self):
        spec = arm(0, 0.1, 0.8)
        assert compute_sustainability(spec, cost=Linear(4.0)).m_f == pytest.approx(0.35)


class TestCondition:
    def test_single_top_arm_fails(self):
        inst = make(100, bern(0.99, 1.0), bern(0.5, 0.9, False))
        rep = check_condition_5_1(inst)
        assert not rep.holds and rep.threshold >= 2

    def test_variants_under_identity_costs(self):
        # the large-k_top condition implies its cost analogue; the converse fails
        for mean, k in ((0.9, 4), (0.9, 2), (0.5, 5), (0.6, 3)):
            inst = make(100, *[bern(mean)] * k)
            rep = check_condition_5_1(inst)
            assert (not rep.holds) or rep.cost_holds
            assert rep.cost_threshold == pytest.approx((1 + mean) / mean)
        rep = check_condition_5_1(make(100, *[bern(0.6)] * 3))
        assert rep.cost_holds and not rep.holds


class TestMechanism:
    @pytest.mark.parametrize("bids, m", [([1.0, 0.8, 0.3], 0.8), ([0.1, 0.8, 0.3], 0.3), ([0.5, 0.5], 0.5)])
    def test_second_highest(self, bids, m):
        assert second_highest(bids) == m

    @pytest.mark.parametrize("bid, m, d, blocked", [(0.3, 0.3, 0.4, True), (1.0, 0.8, 0.89, False), (0.3, 0.3, 0.3, False)])
    def test_blocking_examples(self, bid, m, d, blocked):
        assert blocking_check(bid, m, d) is blocked

    def test_reward_rounds_examples(self):
        assert all(reward_phase_rounds(0.0, 10**5, 1.0, u) == 0 for u in (0.0, 0.3, 0.99))
        assert reward_phase_rounds(1.0, math.exp(10), 1.0, 0.0) == 10**4
        u = np.random.default_rng(0).random(10**5)
        n = 10**5
        draws = [reward_phase_rounds(0.5, n, 1.0, x) for x in u]
        assert np.mean(draws) == pytest.approx(0.5 * math.log(n) ** 4, rel=0.01)

    def test_three_cap_instance_phases(self):
        n = 10**5
        inst = make(n, bern(0.1, 1.0, False), bern(0.1, 0.8), bern(0.1, 0.3))
        out = run_sp_pi(inst, [SpPiEquilibrium(n)] * 3, SpPiConfig(), 0)
        log = out.round_log
        pi = log.phase == 2
        assert np.allclose(log.delivered[pi & (log.arm == 1)], 0.8)
        assert np.allclose(log.delivered[pi & (log.arm == 2)], 0.3)
        reward = log.phase == 3
        honest_reward = reward & (log.arm > 0)
        assert np.array_equal(log.delivered[honest_reward], log.raw[honest_reward])

    def test_underbidder_blocked_at_first_pi_pull(self):
        n = 10**5
        inst = make(n, bern(0.1, 1.0, False), bern(0.1, 0.8), bern(0.1, 0.3))
        from strat_bandit.strategies import BidThenDeliver

        out = run_sp_pi(inst, [BidThenDeliver(0.1, 0.4), SpPiEquilibrium(n), SpPiEquilibrium(n)], SpPiConfig(), 0)
        assert out.metadata["m_prime"] == 0.3
        log = out.round_log
        first_pi = int(np.flatnonzero((log.phase == 2) & (log.arm == 0))[0]) + 1
        assert out.metadata["block_events"] == [[first_pi, 0]]
        assert int(((log.phase == 2) & (log.arm == 0)).sum()) == 1

    def test_honest_arms_never_blocked(self):
        n = 10**5
        inst = make(n, bern(0.1, 1.0, False), bern(0.1, 0.8), bern(0.1, 0.3))
        for seed in range(3):
            out = run_sp_pi(inst, [HonestPassive()] * 3, SpPiConfig(), seed, keep_log=False)
            assert not set(out.metadata["blocked"]) & {1, 2}


class TestEpisodes:
    def test_hand_checkable_ucb_log(self):
        inst = make(10, point(0.9), point(0.5))
        out = run_episode(inst, PolicySpec(), [HonestPassive()] * 2, 0)
        assert list(out.round_log.arm) == oracles.two_arm_ucb_hand((0.9, 0.5), 10) == [0, 1, 0, 1, 0, 0, 1, 0, 0, 0]
        assert out.revenue == pytest.approx(7 * 0.9 + 3 * 0.5)

    def test_same_seed_bit_identical(self):
        inst = make(5000, bern(0.6, 0.8), bern(0.5, 1.0, False))
        prof = [HonestPassive(), ConstantTarget(0.7)]
        assert run_episode(inst, PolicySpec("eps-greedy", c=1.0), prof, 9) == run_episode(inst, PolicySpec("eps-greedy", c=1.0), prof, 9)


class TestMonteCarlo:
    def test_deterministic_has_zero_width(self):
        inst = make(500, point(0.6), point(0.3))
        s = monte_carlo(inst, PolicySpec(), [HonestPassive()] * 2, range(5))
        assert s.revenue_half == 0.0 and np.all(s.pulls_half == 0.0)

    def test_clt_and_variance_scaling(self):
        inst = make(10**4, bern(0.4, 0.8), bern(0.4, 0.8))
        s400 = monte_carlo(inst, PolicySpec(), [HonestPassive()] * 2, range(400))
        s800 = monte_carlo(inst, PolicySpec(), [HonestPassive()] * 2, range(800))
        assert abs(s400.revenue_mean - 0.4 * 10**4) <= 3 * s400.revenue_half
        assert (s400.revenue_half / s800.revenue_half) ** 2 == pytest.approx(2.0, rel=0.2)


class TestProperties:
    def test_single_arm_subset_vacuous(self):
        inst = make(100, bern(0.5), bern(0.5))
        assert verify_fata(inst, PolicySpec(), [HonestPassive()] * 2, [0], range(2)).holds

    def test_eps_fata_statistical(self):
        inst = make(300, point(0.5), point(0.5), point(0.5))
        rep = verify_fata(inst, PolicySpec("eps-greedy", c=1.0), [HonestPassive()] * 3, [0, 1, 2], range(2000))
        assert rep.holds and rep.violations == 0

    @pytest.mark.parametrize("strategy", [HonestPassive(), AbsorbAll()])
    def test_sharp_adaptivity_vacuous(self, strategy):
        n = 10**4
        inst = make(n, bern(0.3, 1.0, False), bern(0.6, 0.8))
        rep = estimate_sharp_adaptivity(inst, PolicySpec(), [strategy, HonestPassive()], 0, range(20))
        assert not rep.triggered and rep.holds
        assert rep.pulls_mean < 40 * math.log(n)

    def test_single_effective_arm_log_regret(self):
        n = 10**4
        inst = make(n, point(0.7), point(0.0))
        rep = regret_ordinary(inst, PolicySpec(), range(3))
        assert rep.regret <= 4 * math.log(n)

    def test_zero_gap_no_regret(self):
        inst = make(2000, point(0.5), point(0.5))
        assert regret_ordinary(inst, PolicySpec("eps-greedy", c=1.0), range(4)).regret == pytest.approx(0.0, abs=1e-9)

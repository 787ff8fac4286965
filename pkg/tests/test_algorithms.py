import math

import pytest

import oracles
from strat_bandit.algorithms import (
    UCB,
    AllArmsBlocked,
    EpsGreedy,
    PolicySpec,
    PolicyState,
    eps_greedy_select,
    eps_schedule,
    PolicyStreams,
    ucb_index,
    ucb_select,
)


def run_deterministic(policy, values, n):
    seq = []
    for t in range(1, n + 1):
        a = policy.select(t)
        policy.observe(a, values[a])
        seq.append(a)
    return seq


class TestUcb:
    def test_index_frozen(self):
        assert ucb_index(0.5, 100, 10**4) == pytest.approx(0.9291932052578695, rel=1e-12)
        assert ucb_index(0.0, 1, 2) == pytest.approx(1.1774100225154747, rel=1e-12)
        assert ucb_index(0.5, 100, 10**4) == oracles.ucb_index(0.5, 100, 10**4)

    def test_uses_full_horizon_log(self):
        # the bonus is fixed by n, not by the current round
        assert ucb_index(0.3, 4, 1000) == pytest.approx(0.3 + math.sqrt(2 * math.log(1000) / 4))

    @pytest.mark.parametrize(
        "values, expected",
        [((0.9, 0.5), [0, 1, 0, 1, 0, 0, 1, 0, 0, 0]), ((0.2, 0.6), [0, 1, 1, 0, 1, 1, 0, 1, 1, 1])],
    )
    def test_hand_computed_sequences(self, values, expected):
        assert oracles.two_arm_ucb_hand(values, 10) == expected
        assert run_deterministic(UCB(2, 10), values, 10) == expected

    def test_pulls_each_arm_once_first(self):
        assert run_deterministic(UCB(4, 100), (0.1, 0.9, 0.5, 0.3), 4) == [0, 1, 2, 3]

    def test_lowest_id_wins_exact_ties(self):
        assert run_deterministic(UCB(3, 50), (0.5, 0.5, 0.5), 9) == [0, 1, 2] * 3

    def test_fewer_pulls_gets_larger_bonus(self):
        assert oracles.ucb_index(0.9, 10, 100) < oracles.ucb_index(0.9, 9, 100)
        state = PolicyState(2, 100, counts=[10, 9], sums=[9.0, 8.1])
        assert ucb_select(state, 20) == 1

    def test_random_ties_use_priorities(self):
        streams = PolicyStreams(5, 3)
        state = PolicyState(3, 50, counts=[2, 2, 2], sums=[1.0, 1.0, 1.0])
        chosen = ucb_select(state, 7, streams)
        assert chosen == min(range(3), key=lambda a: streams.priority(7, a))

    def test_blocked_arms_skipped(self):
        pol = UCB(3, 50)
        pol.block(0)
        assert pol.select(1) == 1
        pol.block(1)
        pol.block(2)
        with pytest.raises(AllArmsBlocked):
            pol.select(2)

    def test_double_block(self):
        pol = UCB(2, 50)
        pol.block(1)
        with pytest.raises(ValueError):
            pol.block(1)


class TestEpsGreedy:
    def test_schedule_frozen(self):
        assert eps_schedule(10**6, 2) == pytest.approx(0.9674212511900306, rel=1e-12)
        assert eps_schedule(10**6, 2) == pytest.approx(0.9672, abs=1e-3)
        assert eps_schedule(10**3, 2) == 1.0
        assert 32 * (2 * math.log(1e3)) ** (1 / 3) * 1e3 ** (-1 / 3) == pytest.approx(7.678, abs=1e-3)
        assert eps_schedule(10**5, 3, 1.0) == pytest.approx(oracles.eps_value(10**5, 3, 1.0))

    def test_exploration_only_when_clamped(self):
        # with epsilon = 1 every round after the first k is a uniform draw
        pol = EpsGreedy(2, 1000, seed=3)
        assert pol.eps == 1.0
        pol.state.counts, pol.state.sums = [1, 1], [1.0, 0.0]
        picks = [pol.select(t) for t in range(3, 1003)]
        assert 400 < picks.count(1) < 600

    def test_exploit_is_greedy(self):
        streams = PolicyStreams(0, 2)
        state = PolicyState(2, 10**6, counts=[5, 5], sums=[1.0, 4.0])
        t = next(t for t in range(1, 10**4) if streams.coin(t) >= 0.5)
        assert eps_greedy_select(state, t, 0.5, streams) == 1

    def test_exploration_never_picks_blocked(self):
        pol = EpsGreedy(3, 1000, seed=1)
        pol.state.counts, pol.state.sums = [1, 1, 1], [0.5, 0.5, 0.5]
        pol.block(1)
        assert 1 not in {pol.select(t) for t in range(1, 500)}

    def test_matches_oracle_selection(self):
        values = (0.3, 0.6, 0.45)
        pol = EpsGreedy(3, 2000, seed=9, c=1.0)
        orc = oracles.OraclePolicy("eps-greedy", 3, 2000, 9, c=1.0)
        for t in range(1, 2001):
            a, b = pol.select(t), orc.select(t)
            assert a == b
            pol.observe(a, values[a] if t % 3 else 0.0)
            orc.observe(b, values[b] if t % 3 else 0.0)


class TestPolicySpec:
    def test_build_and_dict(self):
        assert isinstance(PolicySpec().build(2, 10, 0), UCB)
        assert isinstance(PolicySpec("eps-greedy", c=2.0).build(2, 10, 0), EpsGreedy)
        assert PolicySpec("eps-greedy", c=2.0).to_dict() == {"name": "eps-greedy", "c": 2.0}

    def test_rejects_unknown(self):
        with pytest.raises(ValueError):
            PolicySpec("thompson")
        with pytest.raises(ValueError):
            PolicySpec("eps-greedy", c=0.0)

    def test_reset_keeps_nothing(self):
        pol = UCB(2, 10)
        pol.observe(0, 1.0)
        pol.block(1)
        pol.reset()
        assert pol.state.counts == [0, 0] and not pol.state.blocked

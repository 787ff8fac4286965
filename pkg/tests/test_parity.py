"""Both episode engines against the naive oracle, and against each other."""

import numpy as np
import pytest

import oracles
from strat_bandit.algorithms import PolicySpec
from strat_bandit.core import build_instance
from strat_bandit.engine import run_episode
from strat_bandit.mechanism import SpPiConfig
from strat_bandit.strategies import from_descriptor

ARMS = [
    {"mean": 0.5, "cap": 0.9, "honest": False},
    {"mean": 0.475, "cap": 0.9, "honest": True, "atoms": [(0.0, 0.2), (0.5, 0.3), (0.65, 0.5)]},
    {"mean": 0.4, "cap": 0.7, "honest": False, "cost": 2.0},
]
PROFILES = {
    "mixed": [("mimic_then_absorb", {"level": 0.8, "switch_after": 40}), ("honest_passive", {}), ("constant_target", {"level": 0.6})],
    "overshoot": [("first_pull_overshoot", {"first": 0.9, "then": 0.2}), ("top_performance", {}), ("absorb_all", {})],
}


def instance(arms, n):
    out = []
    for a in arms:
        d = {"mean": a["mean"], "cap": a["cap"], "honest": a["honest"]}
        if "atoms" in a:
            d["distribution"] = {"type": "discrete_finite", "atoms": [list(x) for x in a["atoms"]]}
        if "cost" in a:
            d["cost_coefficient"] = a["cost"]
        out.append(d)
    return build_instance({"horizon": n, "arms": out})


def profile(pairs, n):
    return [from_descriptor({"name": name, **params}, n) for name, params in pairs]


def assert_matches(out, ep):
    log = out.round_log
    assert list(log.arm) == [r[0] for r in ep.log]
    assert np.allclose(log.delivered, [r[3] for r in ep.log], atol=1e-12)
    assert list(out.pulls) == ep.pulls
    assert out.revenue == pytest.approx(ep.revenue, abs=1e-9)
    assert np.allclose(out.cost, ep.cost, atol=1e-9)


POLICIES = [
    ("ucb", PolicySpec("ucb"), {}),
    ("ucb", PolicySpec("ucb", random_ties=True), {"random_ties": True}),
    ("eps-greedy", PolicySpec("eps-greedy", c=1.0), {"c": 1.0}),
    ("eps-greedy", PolicySpec("eps-greedy", c=32.0), {"c": 32.0}),
]


@pytest.mark.parametrize("engine", ["python", "kernel"])
@pytest.mark.parametrize("prof", sorted(PROFILES))
@pytest.mark.parametrize("name, spec, kw", POLICIES, ids=["ucb", "ucb-random-ties", "eps-c1", "eps-c32"])
def test_policy_episode_matches_oracle(engine, prof, name, spec, kw):
    n = 3000
    inst = instance(ARMS, n)
    for seed in (0, 7):
        out = run_episode(inst, spec, profile(PROFILES[prof], n), seed, engine=engine)
        ep = oracles.run_policy(ARMS, PROFILES[prof], n, seed, name, **kw)
        assert_matches(out, ep)


THREE_CAPS = [
    {"mean": 0.1, "cap": 1.0, "honest": False},
    {"mean": 0.575, "cap": 0.8, "honest": True, "atoms": [(0.35, 0.5), (0.8, 0.5)]},
    {"mean": 0.1, "cap": 0.3, "honest": True},
]
# the unique top arm is honest, so it reaches its PI target through the lifting mixture
HONEST_TOP = [
    {"mean": 0.575, "cap": 1.0, "honest": True, "atoms": [(0.2, 0.5), (0.95, 0.5)]},
    {"mean": 0.1, "cap": 0.8, "honest": False},
    {"mean": 0.1, "cap": 0.3, "honest": True},
]


EQ = ("sp_pi_equilibrium", {})
UNDERBID = ("bid_then_deliver", {"bid": 0.1, "level": 0.9})
SP_PI_CASES = {
    "three-caps-equilibrium": (THREE_CAPS, EQ),
    "three-caps-underbid": (THREE_CAPS, UNDERBID),
    "honest-top-equilibrium": (HONEST_TOP, EQ),
}


@pytest.mark.parametrize("engine", ["python", "kernel"])
@pytest.mark.parametrize("blocking", [True, False])
@pytest.mark.parametrize("case", sorted(SP_PI_CASES))
def test_sp_pi_matches_oracle(engine, blocking, case):
    n = 10**5
    arms, first = SP_PI_CASES[case]
    pairs = [first, ("sp_pi_equilibrium", {}), ("sp_pi_equilibrium", {})]
    out = run_episode(instance(arms, n), SpPiConfig(blocking=blocking), profile(pairs, n), 3, engine=engine)
    ep, meta = oracles.run_sp_pi(arms, pairs, n, 3, blocking=blocking)
    assert_matches(out, ep)
    assert out.metadata["reward_rounds"] == meta["n_prime"]
    assert out.metadata["m_prime"] == meta["m_prime"]
    assert {a: r for r, a in out.metadata["block_events"]} == meta["blocked_at"]


@pytest.mark.parametrize("spec", [PolicySpec("ucb"), PolicySpec("eps-greedy", c=1.0)])
def test_engines_bit_identical(spec):
    n = 20000
    inst = instance(ARMS, n)
    prof = profile(PROFILES["mixed"], n)
    for seed in range(3):
        a = run_episode(inst, spec, prof, seed, engine="python")
        b = run_episode(inst, spec, prof, seed, engine="kernel")
        assert a == b
        assert a.revenue == b.revenue and np.array_equal(a.effort, b.effort)


def test_summary_only_mode_agrees():
    n = 20000
    inst = instance(ARMS, n)
    prof = profile(PROFILES["overshoot"], n)
    a = run_episode(inst, PolicySpec(), prof, 4, keep_log=True)
    b = run_episode(inst, PolicySpec(), prof, 4, keep_log=False)
    assert b.round_log is None
    assert a.revenue == b.revenue and np.array_equal(a.pulls, b.pulls)

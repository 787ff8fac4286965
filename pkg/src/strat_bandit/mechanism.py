"""The second-price auction mechanism with a performance-incentive phase (SP+PI).

Phases, in round order:

* bidding: each arm is pulled once and its delivered reward is its bid;
* PI: the second-highest bid ``m'`` is broadcast and a fresh inner policy
  runs, blocking any arm that bid at most ``m'`` yet delivers above it;
* reward: arm ``i`` is paid ``N'_i`` consecutive rounds, with
  ``E[N'_i] = mu_hat_i^PI * (ln n)^(rho+3)``.

The reserve ``R = floor(k * ceil(ln n)^(rho+3))`` is set aside at the end;
the unused part ``R - sum N'_i`` is returned to the PI policy as a tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .algorithms import PolicySpec
from .core import (
    PHASE_BID,
    PHASE_PI,
    PHASE_REWARD,
    ConfigRejected,
    EpisodeOutcome,
    Instance,
    StratBanditError,
)
from .episode import block_rule, make_runner
from .rng import CounterStream, Stream
from .strategies import Strategy


class TooFewBids(StratBanditError):
    pass


@dataclass(frozen=True)
class SpPiConfig:
    rho: float = 1.0
    inner_policy: PolicySpec = PolicySpec("ucb")
    blocking: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigRejected("mechanism.rho", "rho must be positive")

    def reserve(self, k: int, horizon: int) -> int:
        return int(math.floor(k * math.ceil(math.log(horizon)) ** (self.rho + 3)))

    def validate(self, k: int, horizon: int) -> None:
        reserve = self.reserve(k, horizon)
        if horizon - k - reserve <= k:
            raise ConfigRejected(
                "horizon",
                f"horizon {horizon} too small: {k} bidding rounds plus a reserve of {reserve} leave no PI phase",
            )
        if k * math.ceil(math.log(horizon) ** (self.rho + 3)) > reserve:
            raise ConfigRejected("mechanism.rho", "reward-phase rounds could exceed the reserve")

    def to_dict(self) -> dict:
        return {
            "mechanism": "sp_pi",
            "rho": self.rho,
            "inner_policy": self.inner_policy.to_dict(),
            "blocking": self.blocking,
        }


def second_highest(bids) -> float:
    """Second element of the bids sorted in descending order (duplicates kept)."""
    if len(bids) < 2:
        raise TooFewBids(f"need at least 2 bids, got {len(bids)}")
    return sorted((float(b) for b in bids), reverse=True)[1]


def blocking_check(bid: float, m_prime: float, delivered: float) -> bool:
    """Block an arm that bid at most ``m'`` but delivers strictly above it."""
    return block_rule(bid, m_prime, delivered)


def reward_phase_rounds(mean_pi: float, horizon: int, rho: float, u: float) -> int:
    """Randomized rounding of ``mean_pi * (ln n)^(rho+3)``; ``u`` is a uniform draw."""
    if not 0.0 <= mean_pi <= 1.0:
        raise ValueError("mean_pi must lie in [0, 1]")
    x = mean_pi * math.log(horizon) ** (rho + 3)
    base = math.floor(x)
    return int(base) + (1 if u < x - base else 0)


def run_sp_pi(
    instance: Instance,
    profile: list[Strategy],
    config: SpPiConfig = SpPiConfig(),
    seed: int = 0,
    keep_log: bool = True,
    engine: str = "auto",
) -> EpisodeOutcome:
    n, k = instance.horizon, instance.k
    config.validate(k, n)
    reserve = config.reserve(k, n)
    runner = make_runner(instance, profile, seed, keep_log, engine)
    runner.truthful_bids = True

    bids = runner.forced(range(k), PHASE_BID)
    m_prime = second_highest(bids)
    runner.announce("m_prime", m_prime)

    policy = runner.new_policy(config.inner_policy)
    block_args = (bids, m_prime) if config.blocking else (None, None)
    pi_start = runner.t + 1
    events = runner.policy_rounds(policy, n - k - reserve, PHASE_PI, *block_args)

    means = runner.policy_means(policy)
    n_prime = [
        reward_phase_rounds(means[a], n, config.rho, CounterStream(seed, Stream.MECHANISM, a).uniform(0))
        for a in range(k)
    ]
    tail = reserve - sum(n_prime)
    tail_start = runner.t + 1
    events += runner.policy_rounds(policy, tail, PHASE_PI, *block_args)

    runner.announce("reward_phase", None)
    reward_start = runner.t + 1
    schedule = [a for a in range(k) for _ in range(n_prime[a])]
    if schedule:
        runner.forced_bulk(schedule, PHASE_REWARD)
    if runner.t != n:
        raise AssertionError(f"phase accounting played {runner.t} rounds, expected {n}")

    out = runner.outcome()
    out.phase_marks = {"bidding": 1, "pi": pi_start, "pi_tail": tail_start, "reward": reward_start}
    out.metadata = {
        "mechanism": config.to_dict(),
        "seed": seed,
        "bids": [float(b) for b in bids],
        "m_prime": m_prime,
        "blocked": runner.policy_blocked(policy),
        "block_events": [[int(r), int(a)] for r, a in events],
        "mean_pi": [float(m) for m in means],
        "reward_rounds": n_prime,
        "blocked_arms_paid": True,
    }
    return out

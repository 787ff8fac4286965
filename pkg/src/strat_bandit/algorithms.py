"""Principal-side bandit policies: UCB and epsilon-greedy, with arm blocking.

Both policies learn from delivered rewards only.  All policy randomness is
read from counter streams indexed by the global round, so coupled runs
share it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import StratBanditError
from .rng import EXPLORE_ARM, EXPLORE_COIN, TIE_BASE, CounterStream, Stream


class AllArmsBlocked(StratBanditError):
    pass


@dataclass
class PolicyState:
    k: int
    horizon: int
    counts: list[int] = field(default_factory=list)
    sums: list[float] = field(default_factory=list)
    t: int = 0
    blocked: set[int] = field(default_factory=set)

    def __post_init__(self):
        if not self.counts:
            self.counts = [0] * self.k
            self.sums = [0.0] * self.k

    def mean(self, arm: int) -> float:
        return self.sums[arm] / self.counts[arm]

    def unblocked(self) -> list[int]:
        return [a for a in range(self.k) if a not in self.blocked]

    def observe(self, arm: int, delivered: float) -> None:
        self.counts[arm] += 1
        self.sums[arm] += delivered
        self.t += 1

    def block(self, arm: int) -> None:
        if arm in self.blocked:
            raise ValueError(f"arm {arm} already blocked")
        self.blocked.add(arm)


class PolicyStreams:
    """Per-round randomness of a policy."""

    def __init__(self, seed: int, k: int):
        self.coin_stream = CounterStream(seed, Stream.POLICY, EXPLORE_COIN)
        self.arm_stream = CounterStream(seed, Stream.POLICY, EXPLORE_ARM)
        self.tie_streams = [CounterStream(seed, Stream.POLICY, TIE_BASE + a) for a in range(k)]

    def coin(self, t: int) -> float:
        return self.coin_stream.uniform(t)

    def arm(self, t: int) -> float:
        return self.arm_stream.uniform(t)

    def priority(self, t: int, arm: int) -> float:
        return self.tie_streams[arm].uniform(t)


def ucb_index(mean_hat: float, pulls: int, horizon: int) -> float:
    return mean_hat + math.sqrt(2.0 * math.log(horizon) / pulls)


def eps_schedule(horizon: int, k: int, c: float = 32.0) -> float:
    return min(1.0, c * (k * math.log(horizon)) ** (1.0 / 3.0) * horizon ** (-1.0 / 3.0))


def _initial_arm(state: PolicyState) -> int | None:
    for a in range(state.k):
        if a not in state.blocked and state.counts[a] == 0:
            return a
    return None


def _break_tie(best: list[int], streams: PolicyStreams | None, t: int) -> int:
    # random priority: uniform over the tie set, and adding a member to the set
    # can only redirect the choice to that member
    if len(best) == 1 or streams is None:
        return best[0]
    return min(best, key=lambda a: streams.priority(t, a))


def ucb_select(state: PolicyState, round_index: int, tie: PolicyStreams | None = None) -> int:
    """Choose the arm for ``round_index``; lowest id wins ties unless ``tie`` is given."""
    arms = state.unblocked()
    if not arms:
        raise AllArmsBlocked("no unblocked arm left")
    first = _initial_arm(state)
    if first is not None:
        return first
    log_n = math.log(state.horizon)
    best: list[int] = []
    best_val = -math.inf
    for a in arms:
        v = state.sums[a] / state.counts[a] + math.sqrt(2.0 * log_n / state.counts[a])
        if v > best_val:
            best_val, best = v, [a]
        elif v == best_val:
            best.append(a)
    return _break_tie(best, tie, round_index)


def eps_greedy_select(state: PolicyState, round_index: int, eps: float, streams: PolicyStreams) -> int:
    arms = state.unblocked()
    if not arms:
        raise AllArmsBlocked("no unblocked arm left")
    first = _initial_arm(state)
    if first is not None:
        return first
    if streams.coin(round_index) < eps:
        idx = int(streams.arm(round_index) * len(arms))
        return arms[min(idx, len(arms) - 1)]
    best: list[int] = []
    best_val = -math.inf
    for a in arms:
        v = state.sums[a] / state.counts[a]
        if v > best_val:
            best_val, best = v, [a]
        elif v == best_val:
            best.append(a)
    return _break_tie(best, streams, round_index)


def block(state: PolicyState, arm: int) -> PolicyState:
    state.block(arm)
    return state


class Policy:
    """A bandit policy bound to its own state and random streams."""

    name = "policy"

    def __init__(self, k: int, horizon: int, seed: int):
        if horizon < 2:
            raise ValueError("horizon must be at least 2")
        self.state = PolicyState(k, horizon)
        self.streams = PolicyStreams(seed, k)

    def select(self, round_index: int) -> int:
        raise NotImplementedError

    def observe(self, arm: int, delivered: float) -> None:
        self.state.observe(arm, delivered)

    def block(self, arm: int) -> None:
        self.state.block(arm)

    def reset(self) -> None:
        self.state = PolicyState(self.state.k, self.state.horizon, blocked=set())


class UCB(Policy):
    name = "ucb"

    def __init__(self, k: int, horizon: int, seed: int = 0, random_ties: bool = False):
        super().__init__(k, horizon, seed)
        self.random_ties = random_ties

    def select(self, round_index: int) -> int:
        return ucb_select(self.state, round_index, self.streams if self.random_ties else None)


class EpsGreedy(Policy):
    name = "eps-greedy"

    def __init__(self, k: int, horizon: int, seed: int = 0, c: float = 32.0):
        super().__init__(k, horizon, seed)
        self.c = c
        self.eps = eps_schedule(horizon, k, c)

    def select(self, round_index: int) -> int:
        return eps_greedy_select(self.state, round_index, self.eps, self.streams)


@dataclass(frozen=True)
class PolicySpec:
    """Configuration-level description of a plain policy."""

    name: str = "ucb"
    c: float = 32.0
    random_ties: bool = False

    def __post_init__(self):
        if self.name not in ("ucb", "eps-greedy"):
            raise ValueError(f"unknown policy {self.name!r}")
        if self.c <= 0:
            raise ValueError("c must be positive")

    def build(self, k: int, horizon: int, seed: int) -> Policy:
        if self.name == "ucb":
            return UCB(k, horizon, seed, self.random_ties)
        return EpsGreedy(k, horizon, seed, self.c)

    def to_dict(self) -> dict:
        d: dict = {"name": self.name}
        if self.name == "eps-greedy":
            d["c"] = self.c
        if self.name == "ucb" and self.random_ties:
            d["random_ties"] = True
        return d

"""Episode execution.

Two interchangeable runners play rounds: ``PyRunner`` calls strategy objects
with their ``OwnHistory`` (the reference path, and the only one that accepts
user-defined strategies), ``KernelRunner`` plays the compiled rules.  Both
read the same counter streams, so outcomes are bit-identical.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernel
from .algorithms import AllArmsBlocked, Policy, PolicySpec
from .core import (
    PHASE_BID,
    PHASE_NONE,
    PHASE_PI,
    PHASE_REWARD,
    ConstraintViolation,
    EpisodeOutcome,
    Instance,
    OwnHistory,
    RewardTape,
    RoundLog,
    validate_effort,
)
from .rng import EXPLORE_ARM, EXPLORE_COIN, TIE_BASE, CounterStream, Stream
from .strategies import OPEN, PI, REWARD, Strategy, check_profile

_PHASE_VIEW = {PHASE_NONE: OPEN, PHASE_BID: OPEN, PHASE_PI: PI, PHASE_REWARD: REWARD}
_ERRORS = {1: "effort >= -raw", 2: "effort <= cap - raw", 3: "honest effort >= 0"}


def block_rule(bid: float, m_prime: float, delivered: float) -> bool:
    return bid <= m_prime and delivered > m_prime + kernel.BLOCK_TOL


class PyRunner:
    """Reference runner: strategies see only their own history."""

    def __init__(self, instance: Instance, profile: list[Strategy], seed: int, keep_log: bool = True):
        self.instance = instance
        self.profile = profile
        self.seed = seed
        self.keep_log = keep_log
        k = instance.k
        self.tapes = [RewardTape(a, seed) for a in instance.arms]
        self.streams = [CounterStream(seed, Stream.STRATEGY, a.id) for a in instance.arms]
        self.histories = [OwnHistory() for _ in range(k)]
        self.pulls = np.zeros(k, dtype=np.int64)
        self.effort = np.zeros(k)
        self.cost = np.zeros(k)
        self.revenue = 0.0
        self.t = 0
        self._log: list[tuple] = []
        self.truthful_bids = False

    # -- policies
    def new_policy(self, spec: PolicySpec) -> Policy:
        return spec.build(self.instance.k, self.instance.horizon, self.seed)

    def policy_means(self, policy: Policy) -> list[float]:
        s = policy.state
        return [s.sums[a] / s.counts[a] if s.counts[a] else 0.0 for a in range(s.k)]

    def policy_blocked(self, policy: Policy) -> list[int]:
        return sorted(policy.state.blocked)

    def announce(self, kind: str, value) -> None:
        for h in self.histories:
            h._announce(kind, value)

    def _pull(self, a: int, phase: int) -> float:
        self.t += 1
        spec = self.instance.arms[a]
        h = self.histories[a]
        raw = self.tapes[a].value(h.own_pull_count + 1)
        if phase == PHASE_BID and spec.honest and self.truthful_bids:
            e = spec.cap - raw
        else:
            e = self.profile[a](spec, h, raw, self.streams[a])
        d = validate_effort(spec, raw, e, self.t)
        h._append(raw, e, d)
        self.pulls[a] += 1
        self.effort[a] += e
        self.cost[a] += spec.cost_coefficient * e
        self.revenue += d
        if self.keep_log:
            self._log.append((a, raw, e, d, False, phase))
        return d

    def forced(self, arms, phase: int) -> list[float]:
        return [self._pull(int(a), phase) for a in arms]

    def policy_rounds(self, policy: Policy, count: int, phase: int, bids=None, m_prime=None) -> list[tuple[int, int]]:
        events = []
        for _ in range(count):
            a = policy.select(self.t + 1)
            d = self._pull(a, phase)
            policy.observe(a, d)
            if bids is not None and block_rule(bids[a], m_prime, d):
                policy.block(a)
                events.append((self.t, a))
                if self.keep_log:
                    self._log[-1] = self._log[-1][:4] + (True, phase)
        return events

    forced_bulk = forced

    def outcome(self) -> EpisodeOutcome:
        log = None
        if self.keep_log:
            cols = list(zip(*self._log)) if self._log else [()] * 6
            log = RoundLog(
                np.array(cols[0], dtype=np.int64),
                np.array(cols[1], dtype=float),
                np.array(cols[2], dtype=float),
                np.array(cols[3], dtype=float),
                np.array(cols[4], dtype=bool),
                np.array(cols[5], dtype=np.int8),
            )
        return EpisodeOutcome(self.pulls.copy(), self.effort.copy(), self.cost.copy(), float(self.revenue), log)


class _KPolicy:
    def __init__(self, spec: PolicySpec, k: int, horizon: int):
        self.code = kernel.POL_UCB if spec.name == "ucb" else kernel.POL_EPS
        self.random_ties = spec.name == "eps-greedy" or spec.random_ties
        self.eps = spec.build(k, horizon, 0).eps if spec.name == "eps-greedy" else 0.0
        self.counts = np.zeros(k, dtype=np.int64)
        self.sums = np.zeros(k)
        self.blocked = np.zeros(k, dtype=np.int64)  # round of blocking, 0 if active


class KernelRunner:
    """Compiled runner for library strategies."""

    def __init__(self, instance: Instance, profile: list[Strategy], seed: int, keep_log: bool = True):
        self.instance = instance
        self.profile = profile
        self.seed = seed
        self.keep_log = keep_log
        n, k = instance.horizon, instance.k
        self.tape = np.stack([RewardTape(a, seed).values(n) for a in instance.arms])
        self.strat_u = np.stack([CounterStream(seed, Stream.STRATEGY, a.id).array(n) for a in instance.arms])
        self.caps = np.array([a.cap for a in instance.arms])
        self.coef = np.array([a.cost_coefficient for a in instance.arms])
        self.honest = np.array([a.honest for a in instance.arms], dtype=np.bool_)
        self.own = np.zeros(k, dtype=np.int64)
        self.pulls = np.zeros(k, dtype=np.int64)
        self.effort = np.zeros(k)
        self.cost = np.zeros(k)
        self.revenue = np.zeros(1)
        self.t = 0
        size = n if keep_log else 0
        self.log = RoundLog(
            np.zeros(size, dtype=np.int64),
            np.zeros(size),
            np.zeros(size),
            np.zeros(size),
            np.zeros(size, dtype=np.bool_),
            np.zeros(size, dtype=np.int8),
        )
        self.m_prime: float | None = None
        self.announced: list[str] = []
        self.truthful_bids = False
        self._policy_u = None
        self._tie_u = None

    def _streams(self, random_ties: bool):
        n, k = self.instance.horizon, self.instance.k
        if self._policy_u is None:
            self._policy_u = (
                CounterStream(self.seed, Stream.POLICY, EXPLORE_COIN).array(n + 1),
                CounterStream(self.seed, Stream.POLICY, EXPLORE_ARM).array(n + 1),
            )
        if random_ties and self._tie_u is None:
            self._tie_u = np.stack([CounterStream(self.seed, Stream.POLICY, TIE_BASE + a).array(n + 1) for a in range(k)])
        tie = self._tie_u if random_ties else np.zeros((k, 1))
        return self._policy_u[0], self._policy_u[1], tie

    def new_policy(self, spec: PolicySpec) -> _KPolicy:
        return _KPolicy(spec, self.instance.k, self.instance.horizon)

    def policy_means(self, policy: _KPolicy) -> list[float]:
        return [float(policy.sums[a] / policy.counts[a]) if policy.counts[a] else 0.0 for a in range(self.instance.k)]

    def policy_blocked(self, policy: _KPolicy) -> list[int]:
        return [int(a) for a in np.flatnonzero(policy.blocked)]

    def announce(self, kind: str, value) -> None:
        self.announced.append(kind)
        if kind == "m_prime":
            self.m_prime = value

    def _rules(self, phase: int) -> np.ndarray:
        view = _PHASE_VIEW[phase]
        rules = np.zeros((self.instance.k, 5))
        for a, (spec, s) in enumerate(zip(self.instance.arms, self.profile)):
            if phase == PHASE_BID and spec.honest and self.truthful_bids:
                rule = (1, 0.0, 0.0, 0.0, 0.0)
            else:
                rule = s.compile(spec, view, self.m_prime, self.instance.horizon)
            if rule is None:
                raise TypeError(f"strategy {s.name} has no compiled form")
            rules[a] = rule
        return rules

    def _segment(self, mode, count, phase, forced, policy, bids=None, m_prime=None):
        k = self.instance.k
        if policy is None:
            policy = _KPolicy(PolicySpec("ucb"), k, self.instance.horizon)
            coin, arm_u, tie = np.zeros(1), np.zeros(1), np.zeros((k, 1))
        else:
            coin, arm_u, tie = self._streams(policy.random_ties)
        err = np.zeros(3, dtype=np.int64)
        log = self.log
        before = policy.blocked.copy()
        kernel.run_segment(
            mode, self.t + 1, count, phase, forced,
            policy.code, k, math.log(self.instance.horizon), policy.eps, policy.random_ties,
            policy.counts, policy.sums, policy.blocked,
            bids is not None, bids if bids is not None else np.zeros(k), m_prime if m_prime is not None else 0.0,
            self.own, self.tape, self.strat_u, self._rules(phase), self.honest, self.caps, self.coef,
            coin, arm_u, tie,
            self.pulls, self.effort, self.cost, self.revenue,
            self.keep_log, log.arm, log.raw, log.effort, log.delivered, log.blocked, log.phase,
            err,
        )
        if err[0] == kernel.ERR_ALL_BLOCKED:
            raise AllArmsBlocked("no unblocked arm left")
        if err[0] != 0:
            raise ConstraintViolation(int(err[1]), _ERRORS[int(err[0])], int(err[2]))
        self.t += count
        return before

    def forced(self, arms, phase: int) -> list[float]:
        start = self.t
        arms = np.asarray(arms, dtype=np.int64)
        # delivered values are needed for bids; run with a log-free fallback when logs are off
        if not self.keep_log:
            out = []
            for a in arms:
                before = self.revenue[0]
                self._segment(kernel.MODE_FORCED, 1, phase, np.array([a]), None)
                out.append(float(self.revenue[0] - before))
            return out
        self._segment(kernel.MODE_FORCED, len(arms), phase, arms, None)
        return [float(x) for x in self.log.delivered[start : start + len(arms)]]

    def forced_bulk(self, arms, phase: int) -> None:
        self._segment(kernel.MODE_FORCED, len(arms), phase, np.asarray(arms, dtype=np.int64), None)

    def policy_rounds(self, policy: _KPolicy, count: int, phase: int, bids=None, m_prime=None):
        before = self._segment(
            kernel.MODE_POLICY, count, phase, np.zeros(1, dtype=np.int64), policy,
            None if bids is None else np.asarray(bids, dtype=float), m_prime,
        )
        newly = np.flatnonzero((policy.blocked != 0) & (before == 0))
        return sorted((int(policy.blocked[a]), int(a)) for a in newly)

    def outcome(self) -> EpisodeOutcome:
        log = self.log if self.keep_log else None
        return EpisodeOutcome(self.pulls.copy(), self.effort.copy(), self.cost.copy(), float(self.revenue[0]), log)


def compiled(profile: list[Strategy]) -> bool:
    return kernel.AVAILABLE and all(type(s).compile is not Strategy.compile for s in profile)


def make_runner(instance: Instance, profile: list[Strategy], seed: int, keep_log: bool = True, engine: str = "auto"):
    check_profile(instance, profile)
    if engine not in ("auto", "python", "kernel"):
        raise ValueError(f"unknown engine {engine!r}")
    use_kernel = engine == "kernel" or (engine == "auto" and compiled(profile))
    if use_kernel:
        if not compiled(profile):
            raise TypeError("profile contains strategies without a compiled form")
        return KernelRunner(instance, profile, seed, keep_log)
    return PyRunner(instance, profile, seed, keep_log)


def run_policy_episode(
    instance: Instance, policy: PolicySpec, profile: list[Strategy], seed: int, keep_log: bool = True, engine: str = "auto"
) -> EpisodeOutcome:
    runner = make_runner(instance, profile, seed, keep_log, engine)
    handle = runner.new_policy(policy)
    runner.policy_rounds(handle, instance.horizon, PHASE_NONE)
    out = runner.outcome()
    out.metadata = {"policy": policy.to_dict(), "seed": seed}
    return out

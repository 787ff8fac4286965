"""The agents' side: strategy library and cost-function machinery.

A strategy maps ``(spec, own history, raw reward, strategy stream)`` to an
effort.  It cannot reach anything else, which is how the blind-observation
model is enforced.  Phase information in SP+PI episodes arrives only through
broadcast announcements in the history.

Every library strategy can also ``compile`` itself, for a given phase, to one
of a handful of numeric effort rules used by the compiled episode kernel.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Any, Callable, ClassVar

from .core import (
    ArmSpec,
    ConfigRejected,
    ConstraintViolation,
    Instance,
    OwnHistory,
    StratBanditError,
)
from .rng import CounterStream

# kernel effort rules: (code, p0, p1, p2, p3)
R_PASSIVE, R_TOP, R_ABSORB, R_CONST, R_MIXTURE, R_FIRST_PULL, R_MIMIC = range(7)

# phases as seen by a strategy
OPEN, PI, REWARD = "open", "pi", "reward"


class MissingAnnouncement(StratBanditError):
    pass


class PreconditionFailed(StratBanditError):
    pass


class UnsupportedDistribution(StratBanditError):
    pass


def phase_of(history: OwnHistory) -> str:
    if history.has("reward_phase"):
        return REWARD
    if history.has("m_prime"):
        return PI
    return OPEN


class Strategy:
    """Base class. Subclasses are frozen dataclasses with a ``name``."""

    name: ClassVar[str] = "strategy"
    honest_ok: ClassVar[bool] = True

    def __call__(self, spec: ArmSpec, history: OwnHistory, raw: float, stream: CounterStream) -> float:
        raise NotImplementedError

    def compile(self, spec: ArmSpec, phase: str, m_prime: float | None, horizon: int) -> tuple | None:
        """Kernel rule for ``phase``; ``None`` means Python-only."""
        return None

    def check(self, spec: ArmSpec) -> None:
        """Reject static incompatibilities before any round is played."""
        if spec.honest and not self.honest_ok:
            raise ConfigRejected(
                f"profile[{spec.id}]",
                f"{self.name} absorbs rewards; honest agents must spend non-negative effort",
            )

    def descriptor(self) -> dict:
        d = {"name": self.name}
        d.update({k: v for k, v in asdict(self).items() if k != "horizon" and v is not None})
        return d


@dataclass(frozen=True)
class HonestPassive(Strategy):
    name: ClassVar[str] = "honest_passive"

    def __call__(self, spec, history, raw, stream):
        return 0.0

    def compile(self, spec, phase, m_prime, horizon):
        return (R_PASSIVE, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class TopPerformance(Strategy):
    """Always deliver the cap."""

    name: ClassVar[str] = "top_performance"

    def __call__(self, spec, history, raw, stream):
        return spec.cap - raw

    def compile(self, spec, phase, m_prime, horizon):
        return (R_TOP, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class AbsorbAll(Strategy):
    name: ClassVar[str] = "absorb_all"
    honest_ok: ClassVar[bool] = False

    def __call__(self, spec, history, raw, stream):
        if spec.honest:
            raise ConstraintViolation(spec.id, "honest effort >= 0")
        return -raw

    def compile(self, spec, phase, m_prime, horizon):
        return (R_ABSORB, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ConstantTarget(Strategy):
    """Deliver ``level`` on every pull."""

    level: float
    name: ClassVar[str] = "constant_target"

    def __call__(self, spec, history, raw, stream):
        return self.level - raw

    def compile(self, spec, phase, m_prime, horizon):
        return (R_CONST, self.level, 0.0, 0.0, 0.0)

    def check(self, spec):
        super().check(spec)
        if self.level > spec.cap:
            raise ConfigRejected(f"profile[{spec.id}].level", f"level {self.level} exceeds cap {spec.cap}")
        if self.level < 0.0:
            raise ConfigRejected(f"profile[{spec.id}].level", "level must be non-negative")


@dataclass(frozen=True)
class FirstPullOvershoot(Strategy):
    """Deliver ``first`` on the first pull, ``then`` afterwards."""

    first: float
    then: float
    name: ClassVar[str] = "first_pull_overshoot"

    def __call__(self, spec, history, raw, stream):
        if history.own_pull_count == 0:
            return self.first - raw
        return self.then - raw

    def compile(self, spec, phase, m_prime, horizon):
        return (R_FIRST_PULL, self.first, self.then, 0.0, 0.0)

    def check(self, spec):
        super().check(spec)
        if max(self.first, self.then) > spec.cap:
            raise ConfigRejected(f"profile[{spec.id}]", "target exceeds cap")


@dataclass(frozen=True)
class MimicThenAbsorb(Strategy):
    """Deliver ``level`` for the first ``switch_after`` own pulls, then absorb everything.

    The switch is keyed to the arm's own pull count: arms never see round numbers.
    """

    level: float
    switch_after: int
    name: ClassVar[str] = "mimic_then_absorb"
    honest_ok: ClassVar[bool] = False

    def __call__(self, spec, history, raw, stream):
        if history.own_pull_count < self.switch_after:
            return self.level - raw
        return -raw

    def compile(self, spec, phase, m_prime, horizon):
        return (R_MIMIC, self.level, float(self.switch_after), 0.0, 0.0)

    def check(self, spec):
        super().check(spec)
        if self.level > spec.cap:
            raise ConfigRejected(f"profile[{spec.id}].level", "level exceeds cap")


# -- SP+PI strategies ---------------------------------------------------------


def margin_target(m_prime: float, horizon: int) -> float:
    """The PI-phase level of the unique top arm: ``m' + 1/ln n``."""
    return m_prime + 1.0 / math.log(horizon)


def _total(xs):
    # exact for Fractions, compensated for floats
    xs = list(xs)
    if not xs:
        return 0
    if any(isinstance(x, Fraction) for x in xs):
        return sum(xs, Fraction(0))
    return math.fsum(xs)


def mixture_plan(distribution, cap: float, m_bar: float) -> tuple[float, float]:
    """Lift probabilities ``(p_upper, p_lower)`` that move an honest arm's mean to ``m_bar``.

    Rewards at or above ``m_bar`` are lifted to ``cap`` with probability
    ``p_upper``; rewards below are lifted to ``m_bar`` with probability
    ``p_lower``.  Efforts are never negative.
    """
    atoms = [(v, p) for v, p in distribution.atoms() if p > 0]
    up = [(v, p) for v, p in atoms if v >= m_bar]
    down = [(v, p) for v, p in atoms if v < m_bar]
    p_up = _total(p for _, p in up)
    p_down = _total(p for _, p in down)
    mean_up = _total(v * p for v, p in up) / p_up if p_up > 0 else 0
    mean_down = _total(v * p for v, p in down) / p_down if p_down > 0 else 0
    mean = p_up * mean_up + p_down * mean_down
    if mean >= m_bar:
        raise PreconditionFailed(f"mean {mean} already reaches {m_bar}; zero effort is optimal")
    if m_bar > cap:
        raise PreconditionFailed(f"target {m_bar} above cap {cap}")
    if p_up * cap + p_down * mean_down >= m_bar:
        p = (m_bar - p_down * mean_down - p_up * mean_up) / (p_up * (cap - mean_up))
        return (min(p, type(p)(1)), type(p)(0))
    p = (m_bar - p_up * cap - p_down * mean_down) / (p_down * (m_bar - mean_down))
    return (type(p)(1), min(p, type(p)(1)))


def _mixture_effort(raw: float, u: float, m_bar: float, cap: float, p_up: float, p_down: float) -> float:
    if raw >= m_bar:
        return cap - raw if u < p_up else 0.0
    return m_bar - raw if u < p_down else 0.0


@dataclass(frozen=True)
class HonestTopMixture(Strategy):
    """Randomized lifting that gives mean ``m' + 1/ln n`` without ever absorbing.

    ``m_prime`` may be fixed up front; otherwise it is read from the
    mechanism's announcement.
    """

    horizon: int
    m_prime: float | None = None
    name: ClassVar[str] = "honest_top_mixture"

    def _m_prime(self, history: OwnHistory) -> float:
        m = self.m_prime if self.m_prime is not None else history.announced("m_prime")
        if m is None:
            raise MissingAnnouncement("honest_top_mixture needs m'")
        return m

    def plan(self, spec: ArmSpec, m_prime: float) -> tuple[float, float, float]:
        m_bar = margin_target(m_prime, self.horizon)
        return (m_bar, *mixture_plan(spec.distribution, spec.cap, m_bar))

    def __call__(self, spec, history, raw, stream):
        m_bar, p_up, p_down = self.plan(spec, self._m_prime(history))
        return _mixture_effort(raw, stream.uniform(history.own_pull_count), m_bar, spec.cap, p_up, p_down)

    def compile(self, spec, phase, m_prime, horizon):
        m = self.m_prime if self.m_prime is not None else m_prime
        if m is None:
            return None
        m_bar, p_up, p_down = self.plan(spec, m)
        return (R_MIXTURE, m_bar, spec.cap, p_up, p_down)


@dataclass(frozen=True)
class SpPiEquilibrium(Strategy):
    """The equilibrium profile of the auction mechanism, per arm.

    Bid truthfully; in the PI phase deliver the cap when it does not exceed m',
    otherwise ``m' + 1/ln n`` (via the mixture when honest); in the reward
    phase absorb everything unless honest.
    """

    horizon: int
    name: ClassVar[str] = "sp_pi_equilibrium"

    def _pi_target(self, spec: ArmSpec, m_prime: float) -> float:
        return min(margin_target(m_prime, self.horizon), spec.cap)

    def _honest_mixture(self, spec: ArmSpec, m_prime: float) -> tuple[float, float, float] | None:
        m_bar = self._pi_target(spec, m_prime)
        if spec.mean >= m_bar:
            return None
        return (m_bar, *mixture_plan(spec.distribution, spec.cap, m_bar))

    def __call__(self, spec, history, raw, stream):
        phase = phase_of(history)
        if phase == OPEN:
            return spec.cap - raw
        m_prime = history.announced("m_prime")
        if m_prime is None:
            raise MissingAnnouncement("PI phase without m'")
        if phase == REWARD:
            return 0.0 if spec.honest else -raw
        if spec.cap <= m_prime:
            return spec.cap - raw
        if spec.honest:
            plan = self._honest_mixture(spec, m_prime)
            if plan is None:
                return 0.0
            return _mixture_effort(raw, stream.uniform(history.own_pull_count), plan[0], spec.cap, *plan[1:])
        return self._pi_target(spec, m_prime) - raw

    def compile(self, spec, phase, m_prime, horizon):
        if phase == OPEN:
            return (R_TOP, 0.0, 0.0, 0.0, 0.0)
        if m_prime is None:
            raise MissingAnnouncement("PI phase without m'")
        if phase == REWARD:
            return (R_PASSIVE if spec.honest else R_ABSORB, 0.0, 0.0, 0.0, 0.0)
        if spec.cap <= m_prime:
            return (R_TOP, 0.0, 0.0, 0.0, 0.0)
        if spec.honest:
            plan = self._honest_mixture(spec, m_prime)
            if plan is None:
                return (R_PASSIVE, 0.0, 0.0, 0.0, 0.0)
            return (R_MIXTURE, plan[0], spec.cap, plan[1], plan[2])
        return (R_CONST, self._pi_target(spec, m_prime), 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class BidThenDeliver(Strategy):
    """Bid ``bid``, deliver ``level`` during the PI phase, then behave as in equilibrium."""

    bid: float
    level: float
    name: ClassVar[str] = "bid_then_deliver"

    def __call__(self, spec, history, raw, stream):
        phase = phase_of(history)
        if phase == OPEN:
            return self.bid - raw
        if phase == PI:
            return self.level - raw
        return 0.0 if spec.honest else -raw

    def compile(self, spec, phase, m_prime, horizon):
        if phase == OPEN:
            return (R_CONST, self.bid, 0.0, 0.0, 0.0)
        if phase == PI:
            return (R_CONST, self.level, 0.0, 0.0, 0.0)
        return (R_PASSIVE if spec.honest else R_ABSORB, 0.0, 0.0, 0.0, 0.0)

    def check(self, spec):
        super().check(spec)
        if max(self.bid, self.level) > spec.cap:
            raise ConfigRejected(f"profile[{spec.id}]", "target exceeds cap")


# -- descriptors ---------------------------------------------------------------

_REGISTRY: dict[str, tuple[type, set[str]]] = {
    "honest_passive": (HonestPassive, set()),
    "top_performance": (TopPerformance, set()),
    "absorb_all": (AbsorbAll, set()),
    "constant_target": (ConstantTarget, {"level"}),
    "first_pull_overshoot": (FirstPullOvershoot, {"first", "then"}),
    "mimic_then_absorb": (MimicThenAbsorb, {"level", "switch_after"}),
    "sp_pi_equilibrium": (SpPiEquilibrium, set()),
    "honest_top_mixture": (HonestTopMixture, {"m_prime"}),
    "bid_then_deliver": (BidThenDeliver, {"bid", "level"}),
}
_OPTIONAL = {"m_prime"}


def strategy_names() -> list[str]:
    return sorted(_REGISTRY)


def from_descriptor(desc: dict, horizon: int, where: str = "strategy") -> Strategy:
    if not isinstance(desc, dict) or "name" not in desc:
        raise ConfigRejected(where, "expected an object with a name")
    name = desc["name"]
    if name not in _REGISTRY:
        raise ConfigRejected(f"{where}.name", f"unknown strategy {name!r}; known: {', '.join(strategy_names())}")
    cls, params = _REGISTRY[name]
    extra = set(desc) - params - {"name"}
    if extra:
        raise ConfigRejected(f"{where}.{sorted(extra)[0]}", "unknown field")
    missing = params - _OPTIONAL - set(desc)
    if missing:
        raise ConfigRejected(f"{where}.{sorted(missing)[0]}", "required")
    kwargs: dict[str, Any] = {p: desc[p] for p in params if p in desc}
    if "switch_after" in kwargs:
        kwargs["switch_after"] = int(kwargs["switch_after"])
    for key in ("level", "first", "then", "bid", "m_prime"):
        if key in kwargs:
            kwargs[key] = float(kwargs[key])
    if cls in (SpPiEquilibrium, HonestTopMixture):
        kwargs["horizon"] = horizon
    return cls(**kwargs)


def build_profile(instance: Instance, descriptors: list) -> list[Strategy]:
    if not isinstance(descriptors, list) or len(descriptors) != instance.k:
        raise ConfigRejected("profile", f"need exactly one strategy per arm ({instance.k})")
    profile = [from_descriptor(d, instance.horizon, f"profile[{i}]") for i, d in enumerate(descriptors)]
    check_profile(instance, profile)
    return profile


def check_profile(instance: Instance, profile: list[Strategy]) -> None:
    if len(profile) != instance.k:
        raise ConfigRejected("profile", f"need exactly one strategy per arm ({instance.k})")
    for spec, s in zip(instance.arms, profile):
        s.check(spec)


# -- cost functions ------------------------------------------------------------

DEFAULT_GRID = tuple(round(0.05 * i, 12) for i in range(21))


@dataclass(frozen=True)
class Linear:
    """Linear cost ``f(x) = a * x``; ``a = 1`` is the plain effort cost."""

    a: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("cost coefficient must be positive")

    def __call__(self, x: float) -> float:
        return self.a * x


CostFunction = Linear


def expected_cost(f: Callable[[float], float], distribution, x: float) -> float:
    """``g(x) = E_r[f(x - r)]`` over the arm's reward distribution."""
    return math.fsum(f(x - r) * p for r, p in distribution.atoms())


@dataclass(frozen=True)
class SustainabilityReport:
    g_table: tuple[tuple[float, float], ...]
    m_f: float
    sustainable: bool


def _on_grid(x: float, grid) -> bool:
    return any(abs(x - g) <= 1e-9 for g in grid)


def compute_sustainability(
    spec: ArmSpec, grid=DEFAULT_GRID, cost: Callable[[float], float] | None = None
) -> SustainabilityReport:
    """Tabulate ``g`` over the grid up to the cap and find the largest level with positive utility."""
    f = cost if cost is not None else Linear(spec.cost_coefficient)
    support = [v for v, p in spec.distribution.atoms() if p > 0.0]
    if not all(_on_grid(v, grid) for v in support) or not _on_grid(spec.cap, grid):
        kind = type(spec.distribution).__name__
        raise UnsupportedDistribution(f"arm {spec.id}: {kind} support or cap not on the reward grid")
    xs = [x for x in grid if 0.0 <= x <= spec.cap + 1e-9]
    table = tuple((x, expected_cost(f, spec.distribution, x)) for x in xs)
    feasible = [x for x, g in table if 1.0 - g > 0.0]
    m_f = max(feasible)
    return SustainabilityReport(table, m_f, abs(m_f - spec.cap) <= 1e-9)


@dataclass(frozen=True)
class ConditionReport:
    holds: bool
    margin: float  # largest slack epsilon for which the condition still holds
    threshold: float
    cost_holds: bool | None = None
    cost_margin: float | None = None
    cost_threshold: float | None = None


def check_condition_5_1(instance: Instance, grid=DEFAULT_GRID) -> ConditionReport:
    """Large-k_top condition: ``k_top > 2 / min_top(1 + mu_i - M)``, plus its cost-function analogue."""
    m = instance.maxall
    gap = min(1.0 + instance.arms[i].mean - m for i in instance.top_set)
    threshold = 2.0 / gap if gap > 0 else math.inf
    margin = instance.k_top / threshold - 1.0 if math.isfinite(threshold) else -math.inf
    cost_holds = cost_margin = cost_threshold = None
    try:
        reports = [compute_sustainability(a, grid) for a in instance.arms]
    except UnsupportedDistribution:
        reports = None
    if reports is not None:
        m_f = max(r.m_f for r in reports)
        top_c = [a for a, r in zip(instance.arms, reports) if abs(r.m_f - m_f) <= 1e-9]
        ratios = []
        for a in top_c:
            f = Linear(a.cost_coefficient)
            denom = 1.0 - expected_cost(f, a.distribution, m_f)
            ratios.append((1.0 - expected_cost(f, a.distribution, 0.0)) / denom if denom > 0 else math.inf)
        cost_threshold = min(ratios)
        cost_margin = len(top_c) / cost_threshold - 1.0 if math.isfinite(cost_threshold) else -math.inf
        cost_holds = cost_margin > 0
    return ConditionReport(margin > 0, margin, threshold, cost_holds, cost_margin, cost_threshold)

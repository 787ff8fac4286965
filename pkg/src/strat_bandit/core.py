"""Domain types shared by every other module.

An arm draws a raw reward from its distribution, chooses an effort, and the
principal only ever sees ``delivered = raw + effort``.  Raw rewards come from
per-arm reward tapes indexed by the arm's own pull count, so two runs that
pull an arm the same number of times see the same rewards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .rng import BLOCK, Stream, uniforms

TOL = 1e-12


class StratBanditError(Exception):
    """Base class for all errors raised by the library."""


class ConfigRejected(StratBanditError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        self.message = message
        super().__init__(f"{field_name}: {message}")


class NoHonestArm(ConfigRejected):
    def __init__(self):
        super().__init__("arms", "at least one arm must be honest")


class SupportExceedsCap(ConfigRejected):
    pass


class MeanCapOrder(ConfigRejected):
    pass


class ConstraintViolation(StratBanditError):
    """A strategy produced an effort outside the feasible range."""

    def __init__(self, arm: int, constraint: str, round_index: int | None = None):
        self.arm = arm
        self.constraint = constraint
        self.round = round_index
        where = f" at round {round_index}" if round_index is not None else ""
        super().__init__(f"arm {arm} violated {constraint}{where}")


# -- distributions -----------------------------------------------------------


@dataclass(frozen=True)
class ScaledBernoulli:
    """Pays ``cap`` with probability ``mean / cap``, else 0."""

    mean: float
    cap: float

    def atoms(self) -> tuple[tuple[float, float], ...]:
        if self.cap <= 0.0:
            return ((0.0, 1.0),)
        p = self.mean / self.cap
        if p >= 1.0:
            return ((self.cap, 1.0),)
        if p <= 0.0:
            return ((0.0, 1.0),)
        return ((0.0, 1.0 - p), (self.cap, p))

    @property
    def expectation(self) -> float:
        return self.mean

    def sample(self, u: np.ndarray) -> np.ndarray:
        p = self.mean / self.cap if self.cap > 0.0 else 0.0
        return np.where(u < p, self.cap, 0.0)


@dataclass(frozen=True)
class DiscreteFinite:
    """Finite distribution given as ``(value, probability)`` atoms."""

    atoms_: tuple[tuple[float, float], ...]

    def __post_init__(self):
        atoms = tuple(sorted((float(v), float(p)) for v, p in self.atoms_))
        if not atoms:
            raise ConfigRejected("distribution.atoms", "need at least one atom")
        if any(p < 0.0 for _, p in atoms):
            raise ConfigRejected("distribution.atoms", "negative probability")
        if abs(sum(p for _, p in atoms) - 1.0) > 1e-12:
            raise ConfigRejected("distribution.atoms", "probabilities must sum to 1")
        if any(v < 0.0 or v > 1.0 for v, _ in atoms):
            raise ConfigRejected("distribution.atoms", "atom values must lie in [0, 1]")
        object.__setattr__(self, "atoms_", atoms)
        object.__setattr__(self, "_cum", np.cumsum([p for _, p in atoms]))
        object.__setattr__(self, "_values", np.array([v for v, _ in atoms]))

    def atoms(self) -> tuple[tuple[float, float], ...]:
        return self.atoms_

    @property
    def expectation(self) -> float:
        return math.fsum(v * p for v, p in self.atoms_)

    def sample(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._cum, u, side="right")
        np.minimum(idx, len(self.atoms_) - 1, out=idx)
        return self._values[idx]


DistributionSpec = ScaledBernoulli | DiscreteFinite


# -- arms and instances --------------------------------------------------------


@dataclass(frozen=True)
class ArmSpec:
    id: int
    mean: float
    cap: float
    honest: bool
    distribution: DistributionSpec
    cost_coefficient: float = 1.0

    def __post_init__(self):
        where = f"arms[{self.id}]"
        if not 0.0 <= self.cap <= 1.0:
            raise ConfigRejected(f"{where}.cap", "must lie in [0, 1]")
        if self.mean < 0.0:
            raise ConfigRejected(f"{where}.mean", "must be non-negative")
        if self.mean > self.cap:
            raise MeanCapOrder(f"{where}.mean", f"mean {self.mean} exceeds cap {self.cap}")
        if not self.cost_coefficient > 0.0:
            raise ConfigRejected(f"{where}.cost_coefficient", "must be positive")
        top = max(v for v, p in self.distribution.atoms() if p > 0.0)
        if top > self.cap + TOL:
            raise SupportExceedsCap(f"{where}.distribution", f"support reaches {top} > cap {self.cap}")
        if abs(self.distribution.expectation - self.mean) > 1e-9:
            raise ConfigRejected(
                f"{where}.mean", f"distribution expectation {self.distribution.expectation} != mean {self.mean}"
            )


@dataclass(frozen=True)
class Instance:
    arms: tuple[ArmSpec, ...]
    horizon: int

    def __post_init__(self):
        if len(self.arms) < 2:
            raise ConfigRejected("arms", "need at least 2 arms")
        if self.horizon < len(self.arms):
            raise ConfigRejected("horizon", "horizon must be at least the number of arms")
        if not any(a.honest for a in self.arms):
            raise NoHonestArm()
        for i, a in enumerate(self.arms):
            if a.id != i:
                raise ConfigRejected(f"arms[{i}].id", "arm ids must be 0..k-1 in order")

    @property
    def k(self) -> int:
        return len(self.arms)

    @property
    def maxall(self) -> float:
        return max(a.cap for a in self.arms)

    @property
    def top_set(self) -> tuple[int, ...]:
        m = self.maxall
        return tuple(a.id for a in self.arms if a.cap == m)

    @property
    def k_top(self) -> int:
        return len(self.top_set)

    @property
    def honest_best(self) -> int:
        honest = [a for a in self.arms if a.honest]
        return max(honest, key=lambda a: (a.mean, -a.id)).id

    @property
    def honest_mean(self) -> float:
        return self.arms[self.honest_best].mean

    @property
    def second_cap(self) -> float:
        return sorted((a.cap for a in self.arms), reverse=True)[1]

    @property
    def competition_informed(self) -> bool:
        return self.k_top > 1

    def with_horizon(self, horizon: int) -> "Instance":
        return Instance(self.arms, horizon)


# -- reward tapes --------------------------------------------------------------


@dataclass
class RewardTape:
    """Pull-indexed raw rewards of one arm; ``value(l)`` is the l-th pull (1-based)."""

    arm: ArmSpec
    seed: int
    _blocks: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def arm_id(self) -> int:
        return self.arm.id

    def _block(self, b: int) -> np.ndarray:
        block = self._blocks.get(b)
        if block is None:
            u = uniforms(self.seed, Stream.TAPE, self.arm.id, b * BLOCK, BLOCK)
            block = self.arm.distribution.sample(u)
            self._blocks[b] = block
        return block

    def value(self, pull_index: int) -> float:
        if pull_index < 1:
            raise ValueError("pull_index starts at 1")
        b, off = divmod(pull_index - 1, BLOCK)
        return float(self._block(b)[off])

    def values(self, count: int) -> np.ndarray:
        """Raw rewards of pulls ``1 .. count``."""
        u = uniforms(self.seed, Stream.TAPE, self.arm.id, 0, count)
        return self.arm.distribution.sample(u)


def sample_raw(tape: RewardTape, spec: ArmSpec, pull_index: int) -> float:
    if tape.arm.id != spec.id:
        raise ValueError("tape belongs to a different arm")
    return tape.value(pull_index)


def validate_effort(spec: ArmSpec, raw: float, effort: float, round_index: int | None = None) -> float:
    """Check the effort bounds and return the delivered reward."""
    if effort < -raw - TOL:
        raise ConstraintViolation(spec.id, "effort >= -raw", round_index)
    if effort > spec.cap - raw + TOL:
        raise ConstraintViolation(spec.id, "effort <= cap - raw", round_index)
    if spec.honest and effort < 0.0:
        raise ConstraintViolation(spec.id, "honest effort >= 0", round_index)
    return raw + effort


# -- the blind view ------------------------------------------------------------


@dataclass(frozen=True)
class PullRecord:
    pull_index: int
    raw: float
    effort: float
    delivered: float


class OwnHistory:
    """What a strategy may see: its own pulls and the mechanism's broadcasts.

    No round indices, no other arms, no policy internals.
    """

    __slots__ = ("_records", "_announcements")

    def __init__(self):
        self._records: list[PullRecord] = []
        self._announcements: list[tuple[str, Any]] = []

    @property
    def own_pull_count(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[PullRecord, ...]:
        return tuple(self._records)

    @property
    def announcements(self) -> tuple[tuple[str, Any], ...]:
        return tuple(self._announcements)

    def announced(self, kind: str) -> Any:
        for name, value in reversed(self._announcements):
            if name == kind:
                return value
        return None

    def has(self, kind: str) -> bool:
        return any(name == kind for name, _ in self._announcements)

    # engine-side mutators
    def _append(self, raw: float, effort: float, delivered: float) -> None:
        self._records.append(PullRecord(len(self._records) + 1, raw, effort, delivered))

    def _announce(self, kind: str, value: Any) -> None:
        self._announcements.append((kind, value))


# -- outcomes ------------------------------------------------------------------

PHASE_NONE, PHASE_BID, PHASE_PI, PHASE_REWARD = 0, 1, 2, 3
PHASE_NAMES = {PHASE_NONE: "policy", PHASE_BID: "bidding", PHASE_PI: "pi", PHASE_REWARD: "reward"}


@dataclass
class RoundLog:
    arm: np.ndarray
    raw: np.ndarray
    effort: np.ndarray
    delivered: np.ndarray
    blocked: np.ndarray
    phase: np.ndarray

    def __len__(self) -> int:
        return len(self.arm)

    def __eq__(self, other):
        if not isinstance(other, RoundLog):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("arm", "raw", "effort", "delivered", "blocked", "phase")
        )

    def rows(self) -> Iterable[tuple]:
        for t in range(len(self.arm)):
            yield (
                t + 1,
                int(self.arm[t]),
                float(self.raw[t]),
                float(self.effort[t]),
                float(self.delivered[t]),
                bool(self.blocked[t]),
                PHASE_NAMES[int(self.phase[t])],
            )


@dataclass
class EpisodeOutcome:
    pulls: np.ndarray  # T_i(n)
    effort: np.ndarray  # C_i(n)
    cost: np.ndarray  # sum_t f_i(c_i(t))
    revenue: float  # P(n)
    round_log: RoundLog | None = None
    phase_marks: dict[str, int] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def utility(self) -> np.ndarray:
        return self.pulls - self.cost

    @property
    def horizon(self) -> int:
        return int(self.pulls.sum())

    def __eq__(self, other):
        if not isinstance(other, EpisodeOutcome):
            return NotImplemented
        return (
            np.array_equal(self.pulls, other.pulls)
            and np.array_equal(self.effort, other.effort)
            and np.array_equal(self.cost, other.cost)
            and self.revenue == other.revenue
            and self.round_log == other.round_log
            and self.phase_marks == other.phase_marks
            and self.metadata == other.metadata
        )

    def check_invariants(self, instance: Instance) -> None:
        if int(self.pulls.sum()) != instance.horizon:
            raise AssertionError("pull counts do not sum to the horizon")
        log = self.round_log
        if log is None:
            return
        caps = np.array([a.cap for a in instance.arms])
        honest = np.array([a.honest for a in instance.arms])
        d = log.delivered
        if np.any(d < -TOL) or np.any(d > np.minimum(1.0, caps[log.arm]) + TOL):
            raise AssertionError("delivered reward out of range")
        if np.any(honest[log.arm] & (log.effort < 0.0)):
            raise AssertionError("honest arm absorbed reward")
        if abs(math.fsum(d) - self.revenue) > 1e-9 * max(1.0, len(d)):
            raise AssertionError("revenue does not match the round log")
        counts = np.bincount(log.arm, minlength=instance.k)
        if not np.array_equal(counts, self.pulls):
            raise AssertionError("round log disagrees with pull counts")

    def to_dict(self, include_log: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "pulls": [int(x) for x in self.pulls],
            "effort": [float(x) for x in self.effort],
            "cost": [float(x) for x in self.cost],
            "utility": [float(x) for x in self.utility],
            "revenue": float(self.revenue),
            "phase_marks": dict(self.phase_marks),
            "metadata": self.metadata,
        }
        if include_log and self.round_log is not None:
            out["round_log"] = [list(r) for r in self.round_log.rows()]
        return out


# -- construction from JSON ----------------------------------------------------

_ARM_KEYS = {"mean", "cap", "honest", "distribution", "cost_coefficient"}
_INSTANCE_KEYS = {"horizon", "arms", "seed"}


def _strict(obj: dict, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigRejected(where, "expected an object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigRejected(f"{where}.{sorted(extra)[0]}", "unknown field")


def parse_distribution(obj: dict | None, mean: float | None, cap: float, where: str) -> DistributionSpec:
    if obj is None:
        obj = {"type": "scaled_bernoulli"}
    _strict(obj, {"type", "atoms"}, where)
    kind = obj.get("type", "scaled_bernoulli")
    if kind == "scaled_bernoulli":
        if "atoms" in obj:
            raise ConfigRejected(f"{where}.atoms", "not allowed for scaled_bernoulli")
        if mean is None:
            raise ConfigRejected(where.rsplit(".", 1)[0] + ".mean", "required for scaled_bernoulli")
        return ScaledBernoulli(float(mean), float(cap))
    if kind == "discrete_finite":
        atoms = obj.get("atoms")
        if not isinstance(atoms, list) or not all(isinstance(a, (list, tuple)) and len(a) == 2 for a in atoms):
            raise ConfigRejected(f"{where}.atoms", "expected a list of [value, probability] pairs")
        return DiscreteFinite(tuple((float(v), float(p)) for v, p in atoms))
    raise ConfigRejected(f"{where}.type", f"unknown distribution type {kind!r}")


def build_instance(config: dict) -> Instance:
    """Build an Instance from the JSON-shaped instance config."""
    _strict(config, _INSTANCE_KEYS, "instance")
    if "horizon" not in config or "arms" not in config:
        raise ConfigRejected("instance", "horizon and arms are required")
    horizon = config["horizon"]
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
        raise ConfigRejected("instance.horizon", "must be a positive integer")
    raw_arms = config["arms"]
    if not isinstance(raw_arms, list):
        raise ConfigRejected("instance.arms", "expected a list")
    arms = []
    for i, a in enumerate(raw_arms):
        where = f"instance.arms[{i}]"
        _strict(a, _ARM_KEYS, where)
        if "cap" not in a:
            raise ConfigRejected(f"{where}.cap", "required")
        cap = float(a["cap"])
        mean = a.get("mean")
        dist = parse_distribution(a.get("distribution"), mean, cap, f"{where}.distribution")
        if mean is None:
            mean = dist.expectation
        arms.append(
            ArmSpec(
                id=i,
                mean=float(mean),
                cap=cap,
                honest=bool(a.get("honest", False)),
                distribution=dist,
                cost_coefficient=float(a.get("cost_coefficient", 1.0)),
            )
        )
    return Instance(tuple(arms), horizon)


def instance_to_config(instance: Instance, seed: int = 0) -> dict:
    arms = []
    for a in instance.arms:
        d = a.distribution
        dist = (
            {"type": "scaled_bernoulli"}
            if isinstance(d, ScaledBernoulli)
            else {"type": "discrete_finite", "atoms": [list(x) for x in d.atoms()]}
        )
        arms.append(
            {"mean": a.mean, "cap": a.cap, "honest": a.honest, "distribution": dist, "cost_coefficient": a.cost_coefficient}
        )
    return {"horizon": instance.horizon, "arms": arms, "seed": seed}


def arm(i: int, mean: float, cap: float, honest: bool = False, atoms=None, cost: float = 1.0) -> ArmSpec:
    """Shorthand used by presets and tests."""
    dist = ScaledBernoulli(mean, cap) if atoms is None else DiscreteFinite(tuple(atoms))
    return ArmSpec(i, mean, cap, honest, dist, cost)

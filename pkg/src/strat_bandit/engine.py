"""Experiment layer: single episodes and the estimators built on top of them.

Every routine takes an explicit seed list.  Episodes are independent and
results are folded in seed order, so the worker count never changes output.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from statistics import NormalDist
from typing import Any, Union

import numpy as np

from . import kernel
from .algorithms import PolicySpec
from .core import ArmSpec, EpisodeOutcome, Instance, RewardTape
from .episode import run_policy_episode
from .mechanism import SpPiConfig, run_sp_pi
from .rng import CounterStream, Stream
from .strategies import HonestPassive, Strategy, TopPerformance, check_condition_5_1, mixture_plan

Driver = Union[PolicySpec, SpPiConfig]
Z95 = 1.96
WORKERS_ENV = "STRAT_BANDIT_WORKERS"


def slack(n: int, c_s: float = 4.0) -> float:
    """The o(n) allowance used by all finite-horizon checks: ``c_s * sqrt(n ln n)``."""
    return c_s * math.sqrt(n * math.log(n))


def driver_to_dict(driver: Driver) -> dict:
    return driver.to_dict() if isinstance(driver, SpPiConfig) else {"policy": driver.to_dict()}


def run_episode(
    instance: Instance,
    driver: Driver,
    profile: list[Strategy],
    seed: int,
    keep_log: bool = True,
    engine: str = "auto",
) -> EpisodeOutcome:
    """Play one episode of ``instance`` under a plain policy or the auction mechanism."""
    if isinstance(driver, SpPiConfig):
        return run_sp_pi(instance, profile, driver, seed, keep_log, engine)
    if isinstance(driver, PolicySpec):
        return run_policy_episode(instance, driver, profile, seed, keep_log, engine)
    raise TypeError(f"expected a PolicySpec or SpPiConfig, got {type(driver).__name__}")


# -- coupled replay ---------------------------------------------------------------


@dataclass
class CoupledPair:
    base: EpisodeOutcome
    alt: EpisodeOutcome
    arm: int
    subsequence: bool  # others' pulls under alt form a subsequence of those under base
    monotone: bool  # no other arm gains pulls under alt

    @property
    def identical(self) -> bool:
        return self.base == self.alt


def others_sequence(outcome: EpisodeOutcome, arm: int) -> np.ndarray:
    seq = outcome.round_log.arm
    return seq[seq != arm]


def coupled_replay(
    instance: Instance,
    driver: Driver,
    profile: list[Strategy],
    arm: int,
    alt: Strategy,
    seed: int,
    engine: str = "auto",
) -> CoupledPair:
    """Run ``profile`` and its single-arm deviation on the same tapes and streams."""
    alt_profile = list(profile)
    alt_profile[arm] = alt
    base = run_episode(instance, driver, profile, seed, True, engine)
    dev = run_episode(instance, driver, alt_profile, seed, True, engine)
    sub = bool(kernel.is_subsequence(others_sequence(dev, arm), others_sequence(base, arm)))
    mask = np.arange(instance.k) != arm
    mono = bool(np.all(dev.pulls[mask] <= base.pulls[mask]))
    return CoupledPair(base, dev, arm, sub, mono)


# -- Monte Carlo ------------------------------------------------------------------


def _episode_row(args) -> tuple:
    instance, driver, profile, seed, engine = args
    out = run_episode(instance, driver, profile, seed, keep_log=False, engine=engine)
    blocks = len(out.metadata.get("block_events", ()))
    return out.pulls, out.effort, out.cost, out.revenue, blocks


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, workers)


def _map(args: list, workers: int) -> list:
    if workers == 1 or len(args) < 2:
        return [_episode_row(a) for a in args]
    with ProcessPoolExecutor(max_workers=min(workers, len(args))) as pool:
        # map preserves input order, which keeps the fold seed-ordered
        return list(pool.map(_episode_row, args, chunksize=max(1, len(args) // (4 * workers))))


def _mean_half(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    half = Z95 * x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])
    return mean, half


@dataclass
class MonteCarloSummary:
    count: int
    pulls_mean: np.ndarray
    pulls_half: np.ndarray
    effort_mean: np.ndarray
    effort_half: np.ndarray
    utility_mean: np.ndarray
    utility_half: np.ndarray
    revenue_mean: float
    revenue_half: float
    block_events: int = 0
    samples: dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict[str, Any]:
        as_list = lambda a: [float(v) for v in a]  # noqa: E731
        return {
            "count": self.count,
            "pulls_mean": as_list(self.pulls_mean),
            "pulls_half": as_list(self.pulls_half),
            "effort_mean": as_list(self.effort_mean),
            "effort_half": as_list(self.effort_half),
            "utility_mean": as_list(self.utility_mean),
            "utility_half": as_list(self.utility_half),
            "revenue_mean": float(self.revenue_mean),
            "revenue_half": float(self.revenue_half),
            "block_events": self.block_events,
        }


def monte_carlo(
    instance: Instance,
    driver: Driver,
    profile: list[Strategy],
    seeds,
    workers: int | None = None,
    engine: str = "auto",
) -> MonteCarloSummary:
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ValueError("monte_carlo needs at least 2 seeds")
    rows = _map([(instance, driver, profile, s, engine) for s in seeds], worker_count(workers))
    pulls = np.array([r[0] for r in rows], dtype=float)
    effort = np.array([r[1] for r in rows])
    cost = np.array([r[2] for r in rows])
    revenue = np.array([r[3] for r in rows])
    utility = pulls - cost
    pm, ph = _mean_half(pulls)
    em, eh = _mean_half(effort)
    um, uh = _mean_half(utility)
    rm, rh = _mean_half(revenue)
    return MonteCarloSummary(
        len(seeds), pm, ph, em, eh, um, uh, float(rm), float(rh),
        int(sum(r[4] for r in rows)),
        {"pulls": pulls, "effort": effort, "utility": utility, "revenue": revenue},
    )


# -- FATA ---------------------------------------------------------------------------


@dataclass
class FataReport:
    mode: str  # "exact" for UCB, "statistical" otherwise
    subset: tuple[int, ...]
    max_discrepancy: int | None
    violations: int
    pair_gaps: dict[str, tuple[float, float]]  # "i-j" -> (mean difference, half-width)
    holds: bool


def verify_fata(
    instance: Instance,
    policy: PolicySpec,
    profile: list[Strategy],
    subset,
    seeds,
    engine: str = "auto",
) -> FataReport:
    """Fairness among arms that all deliver the same maximal constant.

    UCB: ``|T_i(t) - T_j(t)| <= 1`` at every round of every seed.  Otherwise the
    per-seed differences ``T_i(n) - T_j(n)`` must have a confidence interval
    containing 0 (Bonferroni-corrected over the pairs).
    """
    subset = tuple(sorted(int(a) for a in subset))
    pairs = list(combinations(subset, 2))
    seeds = list(seeds)
    if not pairs:
        return FataReport("exact" if policy.name == "ucb" else "statistical", subset, 0, 0, {}, True)
    if policy.name == "ucb":
        worst, bad = 0, 0
        for s in seeds:
            seq = run_episode(instance, policy, profile, s, True, engine).round_log.arm
            gap = max(int(kernel.max_gap(seq, a, b)) for a, b in pairs)
            worst = max(worst, gap)
            bad += gap > 1
        return FataReport("exact", subset, worst, bad, {}, bad == 0)
    pulls = monte_carlo(instance, policy, profile, seeds, engine=engine).samples["pulls"]
    z = NormalDist().inv_cdf(1.0 - 0.05 / (2 * len(pairs)))
    gaps, bad = {}, 0
    for a, b in pairs:
        d = pulls[:, a] - pulls[:, b]
        mean, half = float(d.mean()), float(z * d.std(ddof=1) / math.sqrt(len(d)))
        gaps[f"{a}-{b}"] = (mean, half)
        bad += abs(mean) > half
    return FataReport("statistical", subset, None, bad, gaps, bad == 0)


# -- sharp adaptivity ------------------------------------------------------------------


@dataclass
class SharpAdaptivityReport:
    arm: int
    pulls_mean: float
    effort_mean: float
    triggered: bool  # E[T_i] >= alpha * n
    required_effort: float  # (mu_h - mu_i) * E[T_i] - slack
    holds: bool


def estimate_sharp_adaptivity(
    instance: Instance,
    policy: PolicySpec,
    profile: list[Strategy],
    arm: int,
    seeds,
    alpha_threshold: float = 0.1,
    c_s: float = 4.0,
    workers: int | None = None,
) -> SharpAdaptivityReport:
    if arm == instance.honest_best:
        raise ValueError("the test arm must differ from the best honest arm")
    summary = monte_carlo(instance, policy, profile, seeds, workers)
    n = instance.horizon
    t_i = float(summary.pulls_mean[arm])
    c_i = float(summary.effort_mean[arm])
    gap = instance.honest_mean - instance.arms[arm].mean
    required = gap * t_i - slack(n, c_s)
    triggered = t_i >= alpha_threshold * n
    return SharpAdaptivityReport(arm, t_i, c_i, triggered, required, (not triggered) or c_i >= required)


# -- deviations ------------------------------------------------------------------------

PROFITABLE, NOT_PROFITABLE, INDETERMINATE = "Profitable", "NotProfitable", "Indeterminate"


@dataclass
class DeviationReport:
    arm: int
    baseline: dict
    deviation: dict
    base_utility: tuple[float, float]  # mean, half-width
    alt_utility: tuple[float, float]
    ratio: float | None
    ci: tuple[float, float] | None
    verdict: str
    tau: float
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "arm": self.arm,
            "baseline": self.baseline,
            "deviation": self.deviation,
            "base_utility": list(self.base_utility),
            "alt_utility": list(self.alt_utility),
            "ratio": self.ratio,
            "ci": list(self.ci) if self.ci is not None else None,
            "verdict": self.verdict,
            "tau": self.tau,
            "note": self.note,
        }


def ratio_interval(alt: np.ndarray, base: np.ndarray) -> tuple[float, float, float]:
    """Ratio of sample means with a delta-method 95% interval (samples treated as independent)."""
    ma, mb = float(alt.mean()), float(base.mean())
    r = ma / mb
    va = float(alt.var(ddof=1)) / len(alt)
    vb = float(base.var(ddof=1)) / len(base)
    se = abs(r) * math.sqrt(va / ma**2 + vb / mb**2) if ma != 0.0 else math.sqrt(va) / abs(mb)
    return r, r - Z95 * se, r + Z95 * se


def classify(lo: float, hi: float, tau: float) -> str:
    if lo > 1.0 + tau:
        return PROFITABLE
    if hi < 1.0 + tau:
        return NOT_PROFITABLE
    return INDETERMINATE


def deviation_ratio(
    instance: Instance,
    driver: Driver,
    profile: list[Strategy],
    arm: int,
    alt: Strategy,
    seeds,
    tau: float = 0.05,
    workers: int | None = None,
) -> DeviationReport:
    """Compare arm ``arm``'s mean utility after switching to ``alt``.

    Both profiles run on the same seed list, so a null deviation yields a ratio
    of exactly 1.
    """
    alt_profile = list(profile)
    alt_profile[arm] = alt
    base = monte_carlo(instance, driver, profile, seeds, workers)
    dev = monte_carlo(instance, driver, alt_profile, seeds, workers)
    ub = base.samples["utility"][:, arm]
    ua = dev.samples["utility"][:, arm]
    bu = (float(base.utility_mean[arm]), float(base.utility_half[arm]))
    au = (float(dev.utility_mean[arm]), float(dev.utility_half[arm]))
    common = dict(
        arm=arm,
        baseline=profile[arm].descriptor(),
        deviation=alt.descriptor(),
        base_utility=bu,
        alt_utility=au,
        tau=tau,
    )
    if bu[0] - bu[1] <= 0.0 <= bu[0] + bu[1]:
        return DeviationReport(ratio=None, ci=None, verdict=INDETERMINATE, note="baseline utility CI contains 0", **common)
    if bu[0] < 0.0:
        return DeviationReport(ratio=None, ci=None, verdict=INDETERMINATE, note="baseline utility is negative", **common)
    r, lo, hi = ratio_interval(ua, ub)
    return DeviationReport(ratio=r, ci=(lo, hi), verdict=classify(lo, hi, tau), **common)


# -- regret and revenue -------------------------------------------------------------------


@dataclass
class RegretReport:
    horizon: int
    regret: float
    half: float
    normalized: float  # regret / (n^(2/3) k^(1/3) (ln n)^(1/3))


def regret_scale(n: int, k: int) -> float:
    return n ** (2.0 / 3.0) * k ** (1.0 / 3.0) * math.log(n) ** (1.0 / 3.0)


def regret_ordinary(instance: Instance, policy: PolicySpec, seeds, workers: int | None = None) -> RegretReport:
    """Pseudo-regret ``n * max mu - P(n)`` with every arm passive."""
    profile = [HonestPassive() for _ in instance.arms]
    s = monte_carlo(instance, policy, profile, seeds, workers)
    n = instance.horizon
    best = max(a.mean for a in instance.arms)
    regret = n * best - s.revenue_mean
    return RegretReport(n, regret, s.revenue_half, regret / regret_scale(n, instance.k))


@dataclass
class RevenueFloorEntry:
    profile: list[dict]
    revenue_per_round: float
    half: float
    floor: float
    holds: bool


@dataclass
class RevenueFloorReport:
    entries: list[RevenueFloorEntry]
    worst: int
    holds: bool


def revenue_floor_check(
    instance: Instance,
    driver: Driver,
    profiles: list[list[Strategy]],
    seeds,
    c_s: float = 4.0,
    workers: int | None = None,
) -> RevenueFloorReport:
    """Each profile must keep ``P(n)/n >= mu_h - slack(n)/n``."""
    n = instance.horizon
    floor = instance.honest_mean - slack(n, c_s) / n
    entries = []
    for prof in profiles:
        s = monte_carlo(instance, driver, prof, seeds, workers)
        rpr = s.revenue_mean / n
        entries.append(RevenueFloorEntry([x.descriptor() for x in prof], rpr, s.revenue_half / n, floor, rpr >= floor))
    worst = int(np.argmin([e.revenue_per_round for e in entries]))
    return RevenueFloorReport(entries, worst, all(e.holds for e in entries))


# -- non-existence harness ---------------------------------------------------------------------


@dataclass
class NonExistenceReport:
    condition_holds: bool
    revenue_fraction: float  # P(n) / (n * max cap)
    below: bool  # revenue_fraction <= alpha
    deviator: int
    deviation: DeviationReport
    refuted: bool  # the profile survived the deviation although the claim says it cannot


def non_existence_harness(
    instance: Instance,
    driver: Driver,
    profile: list[Strategy],
    seeds,
    alpha: float = 0.95,
    tau: float = 0.0,
    workers: int | None = None,
) -> NonExistenceReport:
    """Test a supplied low-revenue profile: some top arm must gain by always delivering its cap.

    The claim covers all profiles; only the supplied one is checked.  The top
    arm with the fewest expected pulls is the deviator.
    """
    cond = check_condition_5_1(instance)
    base = monte_carlo(instance, driver, profile, seeds, workers)
    frac = base.revenue_mean / (instance.horizon * instance.maxall)
    top = list(instance.top_set)
    deviator = min(top, key=lambda a: (base.pulls_mean[a], a))
    rep = deviation_ratio(instance, driver, profile, deviator, TopPerformance(), seeds, tau, workers)
    below = frac <= alpha
    refuted = cond.holds and below and rep.verdict != PROFITABLE
    return NonExistenceReport(cond.holds, float(frac), below, deviator, rep, refuted)


# -- lifting mixture ---------------------------------------------------------------------


@dataclass
class MixtureReport:
    m_bar: float
    p_up: float
    p_down: float
    exact_mean: Fraction  # brute force over (raw atom, coin) outcomes, in rationals
    empirical_mean: float
    pulls: int
    min_effort: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "m_bar": self.m_bar,
            "p_up": self.p_up,
            "p_down": self.p_down,
            "exact_mean": str(self.exact_mean),
            "exact_equals_target": self.exact_mean == _dec(self.m_bar),
            "empirical_mean": self.empirical_mean,
            "pulls": self.pulls,
            "min_effort": self.min_effort,
        }


class _ExactAtoms:
    def __init__(self, atoms):
        self._atoms = tuple((Fraction(v), Fraction(p)) for v, p in atoms)

    def atoms(self):
        return self._atoms


def _dec(x: float) -> Fraction:
    # the decimal the user wrote, not the nearest binary double
    return Fraction(repr(float(x)))


def mixture_check(spec: ArmSpec, m_bar: float, pulls: int = 10**6, seed: int = 0) -> MixtureReport:
    """Exact and simulated delivered mean of the lifting mixture aimed at ``m_bar``."""
    atoms = [(_dec(v), _dec(p)) for v, p in spec.distribution.atoms()]
    cap, target = _dec(spec.cap), _dec(m_bar)
    q_up, q_down = mixture_plan(_ExactAtoms(atoms), cap, target)
    exact = Fraction(0)
    for v, p in atoms:
        lift, q = (cap, q_up) if v >= target else (target, q_down)
        exact += p * (q * lift + (1 - q) * v)
    p_up, p_down = mixture_plan(spec.distribution, spec.cap, m_bar)
    raw = RewardTape(spec, seed).values(pulls)
    u = CounterStream(seed, Stream.STRATEGY, spec.id).array(pulls)
    effort = np.where(
        raw >= m_bar,
        np.where(u < p_up, spec.cap - raw, 0.0),
        np.where(u < p_down, m_bar - raw, 0.0),
    )
    delivered = raw + effort
    return MixtureReport(
        float(m_bar), float(p_up), float(p_down), exact,
        float(delivered.mean()), pulls, float(effort.min()),
    )

"""Run configurations: strict parsing and execution.

A run configuration is a JSON object.  Its ``kind`` decides which other
fields are required; any field not listed for that kind is rejected before
anything runs.  ``execute`` returns a result document and a pass/fail flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .algorithms import PolicySpec
from .core import ConfigRejected, Instance, build_instance
from .engine import (
    INDETERMINATE,
    NOT_PROFITABLE,
    PROFITABLE,
    Driver,
    coupled_replay,
    deviation_ratio,
    driver_to_dict,
    estimate_sharp_adaptivity,
    mixture_check,
    monte_carlo,
    non_existence_harness,
    regret_ordinary,
    revenue_floor_check,
    run_episode,
    verify_fata,
)
from .mechanism import SpPiConfig
from .strategies import ConstantTarget, HonestPassive, Strategy, build_profile, check_condition_5_1, from_descriptor

KINDS = (
    "episode",
    "monte-carlo",
    "coupled",
    "fata",
    "sharp-adaptivity",
    "deviation",
    "regret",
    "revenue-floor",
    "non-existence",
    "condition",
    "mixture",
    "scenario",
)

_COMMON = {"kind", "label", "instance", "policy", "mechanism", "profile", "seeds", "output", "tolerance", "engine", "horizons", "expect"}
_EXTRA = {
    "episode": set(),
    "monte-carlo": set(),
    "coupled": {"arm", "alt"},
    "fata": {"subset", "r_star"},
    "sharp-adaptivity": {"arm", "alpha"},
    "deviation": {"arm", "alt"},
    "regret": set(),
    "revenue-floor": {"profiles"},
    "non-existence": {"alpha"},
    "condition": set(),
    "mixture": {"arm", "m_bar", "pulls"},
    "scenario": {"scenario", "horizon"},
}
_NEEDS_PROFILE = {"episode", "monte-carlo", "coupled", "sharp-adaptivity", "deviation", "non-existence"}
_NEEDS_DRIVER = _NEEDS_PROFILE | {"fata", "regret", "revenue-floor"}
_TOLERANCE_KEYS = {"tau", "c_s", "spread", "min_revenue"}
_VERDICTS = {PROFITABLE, NOT_PROFITABLE, INDETERMINATE}


class ConfigParse(ConfigRejected):
    pass


def _int(value, where: str, minimum: int = 0) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigRejected(where, f"expected an integer >= {minimum}")
    return value


def parse_policy(obj, where: str = "policy") -> PolicySpec:
    if isinstance(obj, str):
        obj = {"name": obj}
    if not isinstance(obj, dict):
        raise ConfigRejected(where, "expected a policy name or object")
    extra = set(obj) - {"name", "c", "random_ties"}
    if extra:
        raise ConfigRejected(f"{where}.{sorted(extra)[0]}", "unknown field")
    name = obj.get("name")
    if name not in ("ucb", "eps-greedy"):
        raise ConfigRejected(f"{where}.name", f"unknown policy {name!r}; known: ucb, eps-greedy")
    if "c" in obj and name != "eps-greedy":
        raise ConfigRejected(f"{where}.c", "only eps-greedy takes c")
    if "random_ties" in obj and name != "ucb":
        raise ConfigRejected(f"{where}.random_ties", "eps-greedy always breaks exploitation ties at random")
    try:
        return PolicySpec(name, float(obj.get("c", 32.0)), bool(obj.get("random_ties", False)))
    except ValueError as exc:
        raise ConfigRejected(where, str(exc)) from None


def parse_mechanism(obj, where: str = "mechanism") -> SpPiConfig:
    if not isinstance(obj, dict):
        raise ConfigRejected(where, "expected an object")
    extra = set(obj) - {"mechanism", "rho", "inner_policy", "blocking"}
    if extra:
        raise ConfigRejected(f"{where}.{sorted(extra)[0]}", "unknown field")
    if obj.get("mechanism") != "sp_pi":
        raise ConfigRejected(f"{where}.mechanism", "the only mechanism is 'sp_pi'")
    inner = parse_policy(obj.get("inner_policy", "ucb"), f"{where}.inner_policy")
    rho = obj.get("rho", 1.0)
    if not isinstance(rho, (int, float)) or isinstance(rho, bool):
        raise ConfigRejected(f"{where}.rho", "expected a number")
    return SpPiConfig(float(rho), inner, bool(obj.get("blocking", True)))


@dataclass
class RunConfig:
    kind: str
    raw: dict
    instance: Instance | None = None
    driver: Driver | None = None
    profile: list[Strategy] | None = None
    seeds: list[int] = field(default_factory=list)
    tolerance: dict[str, float] = field(default_factory=dict)
    output: dict[str, str] = field(default_factory=dict)
    engine: str = "auto"

    @property
    def tau(self) -> float:
        return self.tolerance.get("tau", 0.05)

    @property
    def c_s(self) -> float:
        return self.tolerance.get("c_s", 4.0)


def parse_config(raw: dict) -> RunConfig:
    """Validate ``raw`` completely and build the typed objects it describes."""
    if not isinstance(raw, dict):
        raise ConfigParse("config", "expected a JSON object")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigRejected("kind", f"unknown kind {kind!r}; known: {', '.join(KINDS)}")
    extra = set(raw) - _COMMON - _EXTRA[kind]
    if extra:
        raise ConfigRejected(sorted(extra)[0], f"unknown field for kind {kind!r}")
    cfg = RunConfig(kind, raw)

    tol = raw.get("tolerance", {})
    if not isinstance(tol, dict) or set(tol) - _TOLERANCE_KEYS:
        bad = sorted(set(tol) - _TOLERANCE_KEYS)[0] if isinstance(tol, dict) else ""
        raise ConfigRejected(f"tolerance.{bad}".rstrip("."), "unknown field")
    cfg.tolerance = {k: float(v) for k, v in tol.items()}

    out = raw.get("output", {})
    if not isinstance(out, dict) or set(out) - {"summary", "csv"}:
        raise ConfigRejected("output", "allowed fields: summary, csv")
    cfg.output = dict(out)

    cfg.engine = raw.get("engine", "auto")
    if cfg.engine not in ("auto", "python", "kernel"):
        raise ConfigRejected("engine", "expected auto, python or kernel")

    if "expect" in raw and raw["expect"] not in _VERDICTS | {True, False}:
        raise ConfigRejected("expect", "expected a verdict name or a boolean")

    if kind == "scenario":
        if not isinstance(raw.get("scenario"), str):
            raise ConfigRejected("scenario", "required")
        if "horizon" in raw:
            _int(raw["horizon"], "horizon", 2)
        if "seeds" in raw:
            cfg.seeds = _seeds(raw["seeds"], None)
        return cfg

    if "instance" not in raw:
        raise ConfigRejected("instance", "required")
    cfg.instance = build_instance(raw["instance"])

    if "horizons" in raw:
        hs = raw["horizons"]
        if not isinstance(hs, list) or not hs:
            raise ConfigRejected("horizons", "expected a non-empty list")
        for i, h in enumerate(hs):
            _int(h, f"horizons[{i}]", cfg.instance.k)

    if kind in _NEEDS_DRIVER:
        if ("policy" in raw) == ("mechanism" in raw):
            raise ConfigRejected("policy", "give exactly one of policy or mechanism")
        cfg.driver = parse_policy(raw["policy"]) if "policy" in raw else parse_mechanism(raw["mechanism"])
        if isinstance(cfg.driver, SpPiConfig):
            if kind in ("coupled", "fata", "sharp-adaptivity", "regret"):
                raise ConfigRejected("mechanism", f"kind {kind!r} needs a plain policy")
            cfg.driver.validate(cfg.instance.k, cfg.instance.horizon)
    elif "policy" in raw or "mechanism" in raw:
        raise ConfigRejected("policy" if "policy" in raw else "mechanism", f"not used by kind {kind!r}")

    if kind in _NEEDS_PROFILE and "profile" not in raw:
        raise ConfigRejected("profile", "required")
    if "profile" in raw:
        cfg.profile = build_profile(cfg.instance, raw["profile"])

    k = cfg.instance.k
    if kind in ("coupled", "deviation", "sharp-adaptivity", "mixture"):
        if "arm" not in raw:
            raise ConfigRejected("arm", "required")
        a = _int(raw["arm"], "arm")
        if a >= k:
            raise ConfigRejected("arm", f"no arm {a} among {k}")
    if kind in ("coupled", "deviation"):
        if "alt" not in raw:
            raise ConfigRejected("alt", "required")
        alt = from_descriptor(raw["alt"], cfg.instance.horizon, "alt")
        alt.check(cfg.instance.arms[raw["arm"]])
    if kind == "fata":
        sub = raw.get("subset")
        if not isinstance(sub, list) or any(not isinstance(a, int) or not 0 <= a < k for a in sub):
            raise ConfigRejected("subset", "expected a list of arm indices")
        if not isinstance(raw.get("r_star"), (int, float)):
            raise ConfigRejected("r_star", "required")
    if kind == "revenue-floor":
        profs = raw.get("profiles")
        if not isinstance(profs, list) or not profs:
            raise ConfigRejected("profiles", "expected a non-empty list of profiles")
        for i, p in enumerate(profs):
            try:
                build_profile(cfg.instance, p)
            except ConfigRejected as exc:
                raise ConfigRejected(f"profiles[{i}].{exc.field}", exc.message) from None
    if kind == "mixture" and not isinstance(raw.get("m_bar"), (int, float)):
        raise ConfigRejected("m_bar", "required")

    needs_seeds = kind not in ("condition", "mixture")
    cfg.seeds = _seeds(raw.get("seeds"), raw["instance"].get("seed")) if needs_seeds else []
    if kind in ("monte-carlo", "deviation", "sharp-adaptivity", "regret", "revenue-floor", "non-existence"):
        if len(cfg.seeds) < 2:
            raise ConfigRejected("seeds.count", "at least 2 seeds are needed")
    return cfg


def _seeds(obj, default_base) -> list[int]:
    if obj is None:
        return [int(default_base or 0)]
    if not isinstance(obj, dict) or set(obj) - {"count", "base"}:
        raise ConfigRejected("seeds", "expected {count, base}")
    count = _int(obj.get("count", 1), "seeds.count", 1)
    base = _int(obj.get("base", 0), "seeds.base")
    return list(range(base, base + count))


# -- execution -----------------------------------------------------------------------------


def _with_horizon(cfg: RunConfig, horizon: int) -> RunConfig:
    raw = dict(cfg.raw)
    raw.pop("horizons", None)
    raw["instance"] = dict(raw["instance"], horizon=horizon)
    return parse_config(raw)


def execute(cfg: RunConfig, workers: int | None = None) -> tuple[dict[str, Any], bool, Any]:
    """Run ``cfg``; returns (result document, passed, episode outcome or None)."""
    if "horizons" in cfg.raw:
        doc, ok = sweep(cfg, workers)
        return doc, ok, None
    return _execute_one(cfg, workers)


def sweep(cfg: RunConfig, workers: int | None = None) -> tuple[dict[str, Any], bool]:
    """One summary per horizon plus a trend table of the kind's headline number."""
    rows, trend, passed = [], [], True
    for h in cfg.raw["horizons"]:
        doc, ok, _ = _execute_one(_with_horizon(cfg, h), workers)
        rows.append({"horizon": h, **doc})
        trend.append([h, doc.get("headline")])
        passed &= ok
    values = [v for _, v in trend if isinstance(v, (int, float))]
    doc: dict[str, Any] = {"kind": cfg.kind, "sweep": rows, "trend": trend}
    if cfg.kind == "regret" and values:
        spread = max(values) / min(values) if min(values) > 0 else math.inf
        bound = cfg.tolerance.get("spread", 2.0)
        doc["spread"] = spread
        doc["spread_bound"] = bound
        passed &= spread < bound
    return doc, passed


def _expect(cfg: RunConfig, verdict, default) -> bool:
    want = cfg.raw.get("expect", default)
    if want is None:
        return True
    return verdict == want


def _execute_one(cfg: RunConfig, workers: int | None) -> tuple[dict[str, Any], bool, Any]:
    if cfg.kind == "scenario":
        from .scenarios import run_scenario

        doc, ok = run_scenario(cfg.raw["scenario"], cfg.seeds or None, cfg.raw.get("horizon"), workers)
        return doc, ok, None

    inst, kind = cfg.instance, cfg.kind
    n = inst.horizon
    doc: dict[str, Any] = {"kind": kind}
    if cfg.driver is not None:
        doc["driver"] = driver_to_dict(cfg.driver)
    outcome = None

    if kind == "episode":
        outcome = run_episode(inst, cfg.driver, cfg.profile, cfg.seeds[0], True, cfg.engine)
        outcome.check_invariants(inst)
        doc["outcome"] = outcome.to_dict()
        doc["headline"] = outcome.revenue / n
        return doc, True, outcome

    if kind == "monte-carlo":
        s = monte_carlo(inst, cfg.driver, cfg.profile, cfg.seeds, workers, cfg.engine)
        doc["summary"] = s.to_dict()
        doc["headline"] = s.revenue_mean / n
        ok = s.revenue_mean / n >= cfg.tolerance["min_revenue"] if "min_revenue" in cfg.tolerance else True
        return doc, ok, None

    if kind == "coupled":
        alt = from_descriptor(cfg.raw["alt"], n, "alt")
        arm = cfg.raw["arm"]
        bad_sub, bad_mono, identical = [], [], 0
        for s in cfg.seeds:
            pair = coupled_replay(inst, cfg.driver, cfg.profile, arm, alt, s, cfg.engine)
            if not pair.subsequence:
                bad_sub.append(s)
            if not pair.monotone:
                bad_mono.append(s)
            identical += pair.identical
        doc.update(
            arm=arm, alt=alt.descriptor(), seeds=len(cfg.seeds),
            subsequence_violations=bad_sub, monotonicity_violations=bad_mono, identical_pairs=identical,
        )
        doc["headline"] = len(bad_sub) + len(bad_mono)
        return doc, not bad_sub and not bad_mono, None

    if kind == "fata":
        subset = cfg.raw["subset"]
        rest = cfg.profile or [HonestPassive()] * inst.k
        profile = [ConstantTarget(float(cfg.raw["r_star"])) if a in subset else rest[a] for a in range(inst.k)]
        for a in subset:
            profile[a].check(inst.arms[a])
        r = verify_fata(inst, cfg.driver, profile, subset, cfg.seeds, cfg.engine)
        doc.update(
            mode=r.mode, subset=list(r.subset), max_discrepancy=r.max_discrepancy,
            violations=r.violations, pair_gaps={k: list(v) for k, v in r.pair_gaps.items()}, holds=r.holds,
        )
        doc["headline"] = r.max_discrepancy
        return doc, r.holds, None

    if kind == "sharp-adaptivity":
        r = estimate_sharp_adaptivity(
            inst, cfg.driver, cfg.profile, cfg.raw["arm"], cfg.seeds, cfg.raw.get("alpha", 0.1), cfg.c_s, workers
        )
        doc.update(
            arm=r.arm, pulls_mean=r.pulls_mean, effort_mean=r.effort_mean,
            triggered=r.triggered, required_effort=r.required_effort, holds=r.holds,
        )
        doc["headline"] = r.effort_mean - r.required_effort
        return doc, r.holds, None

    if kind == "deviation":
        alt = from_descriptor(cfg.raw["alt"], n, "alt")
        r = deviation_ratio(inst, cfg.driver, cfg.profile, cfg.raw["arm"], alt, cfg.seeds, cfg.tau, workers)
        doc["report"] = r.to_dict()
        doc["headline"] = r.ratio
        want = cfg.raw.get("expect")
        ok = r.verdict == want if want is not None else r.verdict != PROFITABLE
        return doc, ok, None

    if kind == "regret":
        r = regret_ordinary(inst, cfg.driver, cfg.seeds, workers)
        doc.update(regret=r.regret, half=r.half, normalized=r.normalized)
        doc["headline"] = r.normalized
        return doc, True, None

    if kind == "revenue-floor":
        profiles = [build_profile(inst, p) for p in cfg.raw["profiles"]]
        r = revenue_floor_check(inst, cfg.driver, profiles, cfg.seeds, cfg.c_s, workers)
        doc["entries"] = [
            {"profile": e.profile, "revenue_per_round": e.revenue_per_round, "half": e.half, "floor": e.floor, "holds": e.holds}
            for e in r.entries
        ]
        doc.update(worst=r.worst, holds=r.holds)
        doc["headline"] = r.entries[r.worst].revenue_per_round
        return doc, r.holds, None

    if kind == "non-existence":
        r = non_existence_harness(inst, cfg.driver, cfg.profile, cfg.seeds, cfg.raw.get("alpha", 0.95), cfg.tau, workers)
        doc.update(
            condition_holds=r.condition_holds, revenue_fraction=r.revenue_fraction, below=r.below,
            deviator=r.deviator, deviation=r.deviation.to_dict(), refuted=r.refuted,
        )
        doc["headline"] = r.deviation.ratio
        return doc, not r.refuted, None

    if kind == "condition":
        r = check_condition_5_1(inst)
        doc.update(
            holds=r.holds, margin=r.margin, threshold=r.threshold,
            cost_holds=r.cost_holds, cost_margin=r.cost_margin, cost_threshold=r.cost_threshold,
        )
        doc["headline"] = r.margin
        return doc, _expect(cfg, r.holds, True), None

    if kind == "mixture":
        r = mixture_check(inst.arms[cfg.raw["arm"]], float(cfg.raw["m_bar"]), int(cfg.raw.get("pulls", 10**6)))
        doc.update(r.to_dict())
        tol = cfg.tolerance.get("tau", 0.002)
        ok = bool(doc["exact_equals_target"]) and abs(r.empirical_mean - r.m_bar) <= tol and r.min_effort >= 0.0
        doc["headline"] = r.empirical_mean
        return doc, ok, None

    raise AssertionError(kind)  # pragma: no cover

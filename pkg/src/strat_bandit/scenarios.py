"""Named preset experiments, each with its expected verdict.

A preset is a list of run configurations ("parts").  The scenario passes when
every part reaches its expected verdict.
"""

from __future__ import annotations

from typing import Any, Callable

from .core import StratBanditError


class UnknownScenario(StratBanditError):
    pass


def _arm(mean, cap, honest=False, atoms=None, cost=None) -> dict:
    d: dict[str, Any] = {"mean": mean, "cap": cap, "honest": honest}
    if atoms is not None:
        d["distribution"] = {"type": "discrete_finite", "atoms": [list(a) for a in atoms]}
    if cost is not None:
        d["cost_coefficient"] = cost
    return d


def _inst(horizon: int, *arms: dict) -> dict:
    return {"horizon": horizon, "arms": list(arms)}


def _seeds(count: int) -> dict:
    return {"count": count, "base": 0}


S = lambda name, **kw: {"name": name, **kw}  # noqa: E731
SP_PI = {"mechanism": "sp_pi", "rho": 1.0, "inner_policy": "ucb"}


def robustness(seeds: int, n: int) -> list[dict]:
    inst = _inst(n, _arm(0.6, 0.8, True), _arm(0.3, 1.0), _arm(0.5, 1.0))
    passive = S("honest_passive")
    profiles = [
        [passive, S("absorb_all"), S("absorb_all")],
        [passive, S("mimic_then_absorb", level=0.7, switch_after=n // 2), S("mimic_then_absorb", level=0.7, switch_after=n // 2)],
        [passive, S("constant_target", level=0.5), S("constant_target", level=0.5)],
    ]
    return [
        {"label": f"floor under {p}", "kind": "revenue-floor", "instance": inst, "policy": p, "profiles": profiles, "seeds": _seeds(seeds)}
        for p in ("ucb", {"name": "eps-greedy", "c": 1.0})
    ]


def ucb_fata(seeds: int, n: int) -> list[dict]:
    inst = _inst(n, _arm(0.5, 0.9, True), _arm(0.5, 0.9, True))
    return [{"label": "two arms at 0.9", "kind": "fata", "instance": inst, "policy": "ucb", "subset": [0, 1], "r_star": 0.9, "seeds": _seeds(seeds)}]


def ucb_monotone(seeds: int, n: int) -> list[dict]:
    inst = _inst(n, _arm(0.5, 0.9), _arm(0.6, 0.8, True), _arm(0.4, 0.7))
    return [
        {
            "label": f"arm 0 to top performance, {p}",
            "kind": "coupled",
            "instance": inst,
            "policy": p,
            "profile": [S("honest_passive")] * 3,
            "arm": 0,
            "alt": S("top_performance"),
            "seeds": _seeds(seeds),
        }
        for p in ("ucb", {"name": "eps-greedy", "c": 1.0})
    ]


def eps_regret(seeds: int, n: int) -> list[dict]:
    inst = _inst(n, _arm(0.7, 1.0, True), _arm(0.4, 1.0, True))
    return [
        {
            "label": "normalized regret ladder",
            "kind": "regret",
            "instance": inst,
            "policy": {"name": "eps-greedy", "c": 1.0},
            "horizons": [n, 4 * n, 16 * n],
            "seeds": _seeds(seeds),
        }
    ]


def top_equilibrium(seeds: int, n: int) -> list[dict]:
    inst = _inst(n, _arm(0.7, 0.9), _arm(0.7, 0.9), _arm(0.7, 0.9), _arm(0.5, 0.6, True))
    prof = [S("top_performance")] * 4
    parts = [
        {"label": "revenue near the top cap", "kind": "monte-carlo", "instance": inst, "policy": "ucb", "profile": prof,
         "seeds": _seeds(seeds), "tolerance": {"min_revenue": 0.88}}
    ]
    for alt in (S("honest_passive"), S("constant_target", level=0.7), S("absorb_all")):
        parts.append(
            {"label": f"arm 0 deviates to {alt['name']}", "kind": "deviation", "instance": inst, "policy": "ucb",
             "profile": prof, "arm": 0, "alt": alt, "seeds": _seeds(seeds), "expect": "NotProfitable"}
        )
    return parts


def condition_check(seeds: int, n: int) -> list[dict]:
    big = _inst(n, *[_arm(0.9, 1.0, True) for _ in range(4)])
    small = _inst(n, _arm(0.5, 1.0, True), _arm(0.5, 1.0))
    return [
        {"label": "four top arms at mean 0.9", "kind": "condition", "instance": big, "expect": True},
        {"label": "two top arms at mean 0.5", "kind": "condition", "instance": small, "expect": False},
    ]


def _three_cap_instance(n: int, caps=(1.0, 0.8, 0.3)) -> dict:
    return _inst(n, _arm(0.1, caps[0]), _arm(0.1, caps[1], True), _arm(0.1, caps[2], True))


def sp_pi_equilibrium(seeds: int, n: int) -> list[dict]:
    inst = _three_cap_instance(n)
    prof = [S("sp_pi_equilibrium")] * 3
    return [
        {"label": "equilibrium profile", "kind": "monte-carlo", "instance": inst, "mechanism": SP_PI, "profile": prof, "seeds": _seeds(seeds)},
        {"label": "arm 0 always delivers its cap", "kind": "deviation", "instance": inst, "mechanism": SP_PI, "profile": prof,
         "arm": 0, "alt": S("top_performance"), "seeds": _seeds(seeds), "expect": "NotProfitable"},
    ]


def blocking_variants(seeds: int, n: int) -> list[dict]:
    parts = []
    for caps in ((1.0, 0.8, 0.3), (0.8, 0.8, 0.3)):
        for blocking, verdict in ((True, "NotProfitable"), (False, "Profitable")):
            parts.append(
                {
                    "label": f"caps {caps}, blocking {'on' if blocking else 'off'}",
                    "kind": "deviation",
                    "instance": _three_cap_instance(n, caps),
                    "mechanism": dict(SP_PI, blocking=blocking),
                    "profile": [S("sp_pi_equilibrium")] * 3,
                    "arm": 0,
                    "alt": S("bid_then_deliver", bid=0.1, level=0.4),
                    "seeds": _seeds(seeds),
                    "expect": verdict,
                }
            )
    return parts


def mixture(seeds: int, n: int) -> list[dict]:
    inst = _inst(n, _arm(0.575, 1.0, True, atoms=((0.2, 0.5), (0.95, 0.5))), _arm(0.1, 1.0))
    return [{"label": "lift to 0.9", "kind": "mixture", "instance": inst, "arm": 0, "m_bar": 0.9, "pulls": 10**6}]


def non_dominance(seeds: int, n: int) -> list[dict]:
    inst = _inst(n, _arm(0.6, 1.0), _arm(0.5, 1.0, True))
    return [
        {"label": "arm 0 drops the cap", "kind": "deviation", "instance": inst, "policy": "ucb",
         "profile": [S("top_performance"), S("honest_passive")], "arm": 0, "alt": S("honest_passive"),
         "seeds": _seeds(seeds), "expect": "Profitable"}
    ]


def unsustainable(seeds: int, n: int) -> list[dict]:
    # arm 0 cannot sustain its cap 1 at cost 3 (largest sustainable level 0.8); arm 1 sustains 0.8
    inst = _inst(n, _arm(0.5, 1.0, cost=3.0), _arm(0.5, 0.8, True))
    prof = [S("constant_target", level=0.8), S("constant_target", level=0.8)]
    return [
        {"label": "overshoot once, then hold 0.8", "kind": "deviation", "instance": inst,
         "policy": {"name": "eps-greedy", "c": 1.0}, "profile": prof, "arm": 0,
         "alt": S("first_pull_overshoot", first=1.0, then=0.8), "seeds": _seeds(seeds), "expect": "Profitable"}
    ]


# name -> (summary, builder, default seeds, default horizon)
SCENARIOS: dict[str, tuple[str, Callable[[int, int], list[dict]], int, int]] = {
    "thm-4.2-robustness": ("revenue floor under adversarial non-honest arms", robustness, 50, 10**5),
    "thm-A.2-ucb-fata": ("UCB keeps constant top arms within one pull", ucb_fata, 100, 10**4),
    "thm-A.1-ucb-monotone": ("coupled replays: deviating to the cap never helps others", ucb_monotone, 200, 10**4),
    "thm-B.1-eps-regret": ("epsilon-greedy regret scales as n^(2/3)", eps_regret, 100, 10**4),
    "thm-5.4-top-equilibrium": ("top-performance profile is an equilibrium", top_equilibrium, 50, 10**5),
    "cond-5.1-check": ("large top-set condition on two instances", condition_check, 2, 10**4),
    "thm-6.1-sp-pi-equilibrium": ("auction mechanism under its equilibrium profile", sp_pi_equilibrium, 50, 10**5),
    "remark-6.1-blocking": ("untruthful bidding with and without blocking", blocking_variants, 50, 10**5),
    "appendix-D-mixture": ("honest lifting mixture hits its target mean", mixture, 2, 10**4),
    "appendix-E-non-dominance": ("always delivering the cap is not dominant", non_dominance, 50, 10**5),
    "thm-F.3-unsustainable": ("epsilon-greedy rewards a one-off overshoot", unsustainable, 50, 10**5),
}


def scenario_names() -> list[str]:
    return list(SCENARIOS)


def scenario(name: str, seeds: int | None = None, horizon: int | None = None) -> list[dict]:
    """The preset's run configurations."""
    if name not in SCENARIOS:
        raise UnknownScenario(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    _, build, s0, n0 = SCENARIOS[name]
    return build(seeds or s0, horizon or n0)


def run_scenario(name: str, seeds=None, horizon: int | None = None, workers: int | None = None) -> tuple[dict, bool]:
    from .config import execute, parse_config

    count = len(seeds) if isinstance(seeds, list) else seeds
    parts, passed = [], True
    for raw in scenario(name, count, horizon):
        doc, ok, _ = execute(parse_config(raw), workers)
        parts.append({"label": raw.get("label", ""), "passed": ok, "result": doc})
        passed &= ok
    return {"kind": "scenario", "scenario": name, "parts": parts, "passed": passed}, passed

"""Command line entry point: ``strat-bandit run | scenario | sweep``.

Exit codes: 0 when the run's verdict passes, 1 when it fails, 2 for a bad
configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .core import StratBanditError
from .config import execute, parse_config
from .scenarios import SCENARIOS, UnknownScenario, run_scenario

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
CSV_COLUMNS = ("round", "arm", "raw", "effort", "delivered", "blocked", "phase")


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, default=_default) + "\n"


def write_csv(path: str | Path, outcome) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        w.writerows(outcome.round_log.rows())


def _emit(doc: dict, summary_path: str | None) -> None:
    text = dumps(doc)
    if summary_path:
        Path(summary_path).parent.mkdir(parents=True, exist_ok=True)
        Path(summary_path).write_text(text)
    sys.stdout.write(text)


def _load(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise StratBanditError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise StratBanditError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def cmd_run(args, require_horizons: bool = False) -> int:
    raw = _load(args.config)
    cfg = parse_config(raw)
    if require_horizons and "horizons" not in raw:
        raise StratBanditError("horizons: required for sweep")
    doc, passed, outcome = execute(cfg, args.workers)
    doc["verdict"] = "pass" if passed else "fail"
    if outcome is not None and cfg.output.get("csv"):
        write_csv(cfg.output["csv"], outcome)
    _emit(doc, cfg.output.get("summary"))
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_scenario(args) -> int:
    if args.list:
        for name, (summary, *_rest) in SCENARIOS.items():
            print(f"{name:28s} {summary}")
        return EXIT_PASS
    doc, passed = run_scenario(args.name, args.seeds, args.horizon, args.workers)
    doc["verdict"] = "pass" if passed else "fail"
    out = str(Path(args.out) / f"{args.name}.json") if args.out else None
    _emit(doc, out)
    return EXIT_PASS if passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="strat-bandit", description="Strategic multi-armed bandit experiments.")
    p.add_argument("--workers", type=int, default=None, help="parallel episodes (default: $STRAT_BANDIT_WORKERS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a JSON configuration")
    r.add_argument("config")

    s = sub.add_parser("scenario", help="run a named preset")
    s.add_argument("name", nargs="?")
    s.add_argument("--list", action="store_true", help="list presets and exit")
    s.add_argument("--out", help="directory for <name>.json")
    s.add_argument("--seeds", type=int, help="seed count for every part")
    s.add_argument("--horizon", type=int, help="horizon (base of the ladder for sweeps)")

    w = sub.add_parser("sweep", help="run a configuration over its horizon list")
    w.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_run(args, require_horizons=True)
        if not args.list and not args.name:
            raise UnknownScenario(f"scenario name required; known: {', '.join(SCENARIOS)}")
        return cmd_scenario(args)
    except StratBanditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Command line entry points: run a scenario file, run bundled suites, list them.

Exit codes: 0 all checks passed, 1 a tolerance check failed, 2 configuration
or usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .scenarios import (ConfigError, RunReport, bundled_scenarios,
                        run_scenario_config, scenario_tags)

__all__ = ["main", "run_scenario", "check_suite"]


def _output_root(arg: str | None) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get("EMTOMO_OUTPUT", "emtomo_output"))


def run_scenario(config_path: str, output_root: Path | None = None) -> RunReport:
    """Execute one scenario file; raises ConfigError on invalid input."""
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"no such config file: {config_path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    return run_scenario_config(raw, output_root or _output_root(None))


def check_suite(tag: str, output_root: Path | None = None) -> list[RunReport]:
    """Run every bundled scenario matching the tag ('all' runs the union)."""
    known = scenario_tags()
    if tag != "all" and tag not in known:
        raise ConfigError(
            f"unknown tag {tag!r}; available: {sorted(known)} or 'all'")
    reports = []
    root = output_root or _output_root(None)
    for name, (tags, raw) in bundled_scenarios().items():
        if tag == "all" or tag in tags:
            reports.append(run_scenario_config(raw, root))
    return reports


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="emtomo",
        description="Tomographic phase-space toolkit for charged particles "
                    "in electromagnetic fields")
    parser.add_argument("--output", help="artifact directory "
                                         "(default $EMTOMO_OUTPUT or ./emtomo_output)")
    parser.add_argument("--threads", type=int, default=0,
                        help="cap worker threads for array backends")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="run a scenario config file")
    p_run.add_argument("config")

    p_check = sub.add_parser("check", help="run bundled invariant scenarios")
    p_check.add_argument("--tag", required=True,
                         help="gauge | kernel | reconstruction | residual | limit | all")

    sub.add_parser("list", help="list bundled scenarios")

    args = parser.parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    if args.command == "list":
        for name, (tags, raw) in bundled_scenarios().items():
            print(f"{name:38s} tags={','.join(sorted(tags))} "
                  f"tasks={[t['task'] for t in raw['tasks']]}")
        return 0

    if args.command == "run":
        try:
            report = run_scenario(args.config, _output_root(args.output))
        except ConfigError as err:
            print(f"config error: {err}", file=sys.stderr)
            return 2
        print(json.dumps(report.to_dict(), indent=2, default=float))
        return 0 if report.passed else 1

    if args.command == "check":
        try:
            reports = check_suite(args.tag, _output_root(args.output))
        except ConfigError as err:
            print(f"error: {err}", file=sys.stderr)
            return 2
        ok = True
        for rep in reports:
            status = "pass" if rep.passed else "FAIL"
            ok = ok and rep.passed
            print(f"{rep.name:38s} {status}  ({rep.wall_time:.1f} s)")
        return 0 if ok else 1

    parser.print_help()
    return 2


if __name__ == "__main__":
    sys.exit(main())

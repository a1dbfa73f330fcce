"""Command-line entry point: ``effattack {run,validate,report merge,selftest}``.

Exit codes: 0 success, 1 validation failure, 2 runtime failure. The default
output directory for ``run`` can be set with ``EFFATTACK_OUT_DIR``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from ..errors import EffAttackError, ValidationError
from .report import emit_report, merge_reports
from .runner import run_scenario
from .scenario import load_scenario

OUT_DIR_ENV = "EFFATTACK_OUT_DIR"
DEFAULT_OUT_DIR = "effattack-out"
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="effattack", description="Efficiency-attack benchmark harness.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file and write its report")
    run.add_argument("scenario")
    run.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--seed", type=int, help="override the scenario's master seed")

    val = sub.add_parser("validate", help="check a scenario file without running it")
    val.add_argument("scenario")

    rep = sub.add_parser("report", help="report utilities")
    rsub = rep.add_subparsers(dest="report_command", required=True)
    merge = rsub.add_parser("merge", help="concatenate the rows of several reports")
    merge.add_argument("files", nargs="+")
    merge.add_argument("--out", help="write the merged CSV here instead of stdout")

    sub.add_parser("selftest", help="run the built-in invariant checks")
    return p


def _load(path, seed=None):
    sc = load_scenario(path)
    return sc.with_seed(seed) if seed is not None else sc


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "selftest":
        from .selftest import run_selftest
        return EXIT_OK if run_selftest() else EXIT_RUNTIME
    try:
        if args.command == "validate":
            sc = _load(args.scenario)
            print(f"ok: {sc.id} ({sc.behavior}, {sum(len(a.epsilons) for a in sc.attacks)} campaign(s))")
            return EXIT_OK
        if args.command == "run":
            sc = _load(args.scenario, args.seed)
            out = args.out or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR
            path = emit_report(run_scenario(sc), args.format, Path(out))
            print(path)
            return EXIT_OK
        if args.command == "report":
            text = merge_reports(args.files)
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
        return EXIT_OK
    except ValidationError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (EffAttackError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

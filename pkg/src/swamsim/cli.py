"""Command line entry points: run scenarios, dump rule tables, validate files.

Exit codes: 0 success, 2 scenario parse/validation problem, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ScenarioError, SwamError
from .presets import PRESETS, resolve
from .runner import dump_rules, run_experiment
from .scenario import parse_time


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swam-sim",
        description=(
            "Deterministic simulator for a multi-tenant wireless "
            "access/backhaul network. Presets: " + ", ".join(PRESETS)
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a preset or scenario file")
    run_p.add_argument("scenario", help="preset name or path to a .scn file")
    run_p.add_argument("--out", type=Path, default=None, help="output directory")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--trace", action="store_true", help="write trace.txt")
    run_p.add_argument(
        "--repeat", type=int, default=1,
        help="repetition sweep; run k uses seed+k, outputs under repN/",
    )
    run_p.add_argument(
        "--no-figures", action="store_true", help="skip the png figures"
    )

    dump_p = sub.add_parser("dump-rules", help="print all rule tables at an instant")
    dump_p.add_argument("scenario")
    dump_p.add_argument("--at", required=True, help="time, e.g. 0, 500ms, 59s")

    val_p = sub.add_parser("validate", help="check a scenario file")
    val_p.add_argument("scenario")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "run":
            base = args.out
            if args.repeat > 1:
                scn_name = Path(str(args.scenario)).stem
                base = base or Path(f"{scn_name}_out")
                for rep in range(args.repeat):
                    seed = (args.seed or 0) + rep
                    outdir = run_experiment(
                        args.scenario, Path(base) / f"rep{rep}", seed=seed,
                        trace=args.trace, figures=not args.no_figures,
                    )
                    print(f"rep{rep}: wrote {outdir}")
            else:
                outdir = run_experiment(
                    args.scenario, base, seed=args.seed, trace=args.trace,
                    figures=not args.no_figures,
                )
                print((outdir / "report.txt").read_text(), end="")
                print(f"outputs in {outdir}")
        elif args.command == "dump-rules":
            print(dump_rules(args.scenario, parse_time(args.at)), end="")
        elif args.command == "validate":
            resolve(args.scenario)
            print(f"{args.scenario}: ok")
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except (SwamError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

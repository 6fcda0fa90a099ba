"""Command line entry point: ``coupledris {run,sweep-d,verify,export-impedances}``.

Exit codes: 0 success, 1 partial failure or oracle breach, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path

from . import experiment
from .errors import BundleFormatError, CoupledRisError, ScenarioError
from .scenario import load_scenario
from .verify import run_checks

log = logging.getLogger("coupledris")


def _fraction(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}") from None


def _d_list(text: str) -> list[float]:
    return [_fraction(t) for t in text.replace(",", " ").split()]


def _apply_overrides(s, args):
    run = {}
    if getattr(args, "seed", None) is not None:
        run["seed"] = args.seed
    if getattr(args, "realizations", None) is not None:
        run["realizations"] = args.realizations
    if getattr(args, "solver", None):
        run["solver"] = args.solver
    if getattr(args, "coupling", None) and args.coupling != "both":
        run["coupling_mode"] = args.coupling
    if getattr(args, "timing", False):
        run["timing"] = True
    return s.with_("run", **run) if run else s


def _common(p):
    p.add_argument("scenario", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--realizations", type=int)
    p.add_argument("--solver", choices=["closed_form", "grid_baseline"])
    p.add_argument("--parallel", type=int, default=1, help="realizations solved concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coupledris", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="optimize all realizations of a scenario")
    _common(p)
    p.add_argument("--coupling", choices=["MCA", "MCU"])
    p.add_argument("--timing", action="store_true", help="write wall-clock times into trace.csv")

    p = sub.add_parser("sweep-d", help="converged rate versus RIS spacing")
    _common(p)
    p.add_argument("--d-list", type=_d_list, required=True,
                   help="spacings in wavelengths, e.g. '1/2,1/4,1/8,1/16'")
    p.add_argument("--mode", choices=["fixed_aperture", "fixed_count"], default="fixed_aperture")
    p.add_argument("--coupling", choices=["MCA", "MCU", "both"])

    p = sub.add_parser("verify", help="run the oracle cross-check corpus")
    p.add_argument("--level", choices=["quick", "full"], default="quick")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("export-impedances", help="write the impedance bundle of one realization")
    p.add_argument("scenario", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--realization", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "verify":
        reports = run_checks(args.level, args.seed)
        for r in reports:
            print(r.line())
        return 0 if all(r.passed for r in reports) else 1

    try:
        scenario = _apply_overrides(load_scenario(args.scenario), args)
        if args.command == "run":
            summary = experiment.run_experiment(scenario, args.out_dir, parallel=args.parallel)
            agg = summary.aggregates()
            print(f"{agg['succeeded']}/{agg['realizations']} realizations succeeded; "
                  f"mean rate {agg.get('mean_rate', float('nan')):.4f} bits/s/Hz; "
                  f"outputs in {args.out_dir}")
            return summary.exit_code
        if args.command == "sweep-d":
            couplings = ["MCA", "MCU"] if args.coupling == "both" else None
            args.out_dir.mkdir(parents=True, exist_ok=True)
            out = args.out_dir / f"sweep_{args.mode}.csv"
            text = experiment.sweep_spacing(scenario, args.d_list, args.mode, couplings, out)
            sys.stdout.write(text)
            return 0
        if args.command == "export-impedances":
            experiment.export_impedances(scenario, args.out, args.realization)
            print(f"wrote {args.out}")
            return 0
    except (ScenarioError, BundleFormatError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except CoupledRisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

    levyfoliation run CONFIG [--out DIR] [--workers N] [--seed-offset K]
    levyfoliation check-gap --a A --b B --K K --eta ETA
    levyfoliation preset example5 [--epsilon E]

Exit codes: 0 success, 1 experiment failure (or gap violated for
``check-gap``), 2 configuration error.  ``$LEVYFOLIATION_OUT`` sets the
default output directory of ``run``.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PRESETS, load_config, preset_document
from .errors import ConfigError, ParameterDomainError
from .lyapunov_perron import fiber_lipschitz_bound, gap_condition
from .runner import run

log = logging.getLogger("levyfoliation")


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed_offset:
        cfg = cfg.with_seed_offset(args.seed_offset)
    report = run(cfg, workers=args.workers, out_dir=args.out)
    for task, entry in report.experiments.items():
        print(f"{entry['status'].upper():6s} {task}")
        for seed, summary in entry["seeds"].items():
            if "error" in summary:
                print(f"       seed {seed}: {summary['error']}")
    return report.exit_code


def _cmd_check_gap(args) -> int:
    try:
        rho, holds = gap_condition(args.a, args.b, args.K, args.eta)
    except ParameterDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"rho = {rho:.12g}")
    print(f"gap condition holds: {holds}")
    if holds:
        for side in ("unstable", "stable"):
            print(f"Lipschitz bound ({side}): "
                  f"{fiber_lipschitz_bound(args.a, args.b, args.K, args.eta, side):.12g}")
    return 0 if holds else 1


def _cmd_preset(args) -> int:
    sys.stdout.write(preset_document(args.name, args.epsilon))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levyfoliation",
                                description="Invariant foliations of Levy-driven systems.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a YAML run configuration")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--seed-offset", type=int, default=0)
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("check-gap", help="evaluate the gap condition")
    g.add_argument("--a", type=float, required=True)
    g.add_argument("--b", type=float, required=True)
    g.add_argument("--K", type=float, required=True)
    g.add_argument("--eta", type=float, required=True)
    g.set_defaults(func=_cmd_check_gap)

    s = sub.add_parser("preset", help="print a runnable configuration for a preset")
    s.add_argument("name", choices=PRESETS)
    s.add_argument("--epsilon", type=float, default=1.0)
    s.set_defaults(func=_cmd_preset)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

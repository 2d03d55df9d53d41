"""Command-line entry point: ``stochmech {solve,sample,verify,report}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config, with_overrides
from .runner import EXIT_ERROR, EXIT_OK, StageError, run, sample, solve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochmech",
        description="Diffusion-field reconstruction and verification runs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "propagate the wavefunction and dump the diffusion fields",
        "sample": "sample forward and backward path ensembles",
        "verify": "run the configured checks and write the report",
        "report": "verify, then also write plot data and the entropy breakdown",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--seed", type=int, help="sampler seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--check", action="append", metavar="ID",
                       help="check to run; repeat for several (replaces the config list)")
        p.add_argument("--format", choices=("csv", "text"), help="report format")
        p.add_argument("--threads", type=int, help="sampler worker threads")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = with_overrides(load_config(args.config), seed=args.seed, out=args.out,
                             checks=args.check, fmt=args.format, threads=args.threads)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        if args.command == "solve":
            outcome = solve(cfg)
        elif args.command == "sample":
            outcome = sample(cfg)
        else:
            outcome = run(cfg, plot_data=True if args.command == "report" else None)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for r in outcome.results:
        print(f"{r.id:26s} {r.value!r:>26} {'<=' if r.comparator == 'max' else '>='} "
              f"{r.tolerance!r:<8} {'pass' if r.passed else 'FAIL'}")
    for f in outcome.files:
        print(f"wrote {f}")
    return outcome.exit_status if outcome.results else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``rqnn <experiment> [--seed S] [--out PATH] [--config FILE]``."""

from __future__ import annotations

import argparse
import sys

from .errors import RQNNError
from .experiments import (DEFAULTS, EXPERIMENTS, load_config, make_config, parse_config_text,
                          run_experiment)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rqnn", description="RQNN verification experiments")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run {name}")
        p.add_argument("--seed", type=int, help="master RNG seed (required for sweeps unless in --config)")
        p.add_argument("--out", help=f"CSV output path (default {name}.csv)")
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--workers", type=int, help="process pool size for independent trials")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key; keys: " + ", ".join(DEFAULTS[name]))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_vals = load_config(args.config) if args.config else {}
        overrides = parse_config_text("\n".join(args.set))
        overrides.update({"seed": args.seed, "out": args.out, "workers": args.workers})
        cfg = make_config(args.experiment, file_vals, overrides)
        rec = run_experiment(cfg)
    except (RQNNError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for claim in rec.claims:
        print(claim.line())
    print(f"wrote {rec.meta['path']}")
    return 0 if rec.passed else 1


if __name__ == "__main__":
    sys.exit(main())

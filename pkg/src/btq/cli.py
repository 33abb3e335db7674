"""``btq <experiment> --config path [--jobs K] [--out dir]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, ConfigError, load_config


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="btq", description="Berezin-Toeplitz verification experiments on the flat torus.")
    ap.add_argument("experiment", choices=EXPERIMENTS + ("all",))
    ap.add_argument("--config", required=True, help="flat key = value configuration file")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes, one per p value")
    ap.add_argument("--out", default=None, help="output directory (overrides the config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("btq: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config).with_experiment(args.experiment)
    except ConfigError as exc:
        print(f"btq: config error: {exc}", file=sys.stderr)
        return 2
    if args.out is not None:
        cfg = cfg.with_out(args.out)

    from .experiments import run

    result = run(cfg, jobs=args.jobs)
    for c in result.checks:
        print(c.line)
    n_fail = sum(not c.passed for c in result.checks)
    print(f"{'PASS' if result.passed else 'FAIL'}: {len(result.checks) - n_fail}/{len(result.checks)} checks passed; "
          f"reports in {cfg.out}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())

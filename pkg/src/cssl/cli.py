"""Command line entry point: ``cssl run | validate | plot``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import runner
from .errors import CSSLError
from .plotting import emit_plots


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cssl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment battery")
    run.add_argument("--config", required=True)
    run.add_argument("--modes", help="comma-separated subset of " + ",".join(runner.MODES))
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--workers", type=int)
    run.add_argument("--no-plots", action="store_true")

    val = sub.add_parser("validate", help="check a config and print it normalised")
    val.add_argument("--config", required=True)

    plot = sub.add_parser("plot", help="render plots from a finished run")
    plot.add_argument("--in", dest="in_dir", required=True)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "validate":
        cfg, errors = runner.validate_config(args.config)
        if errors:
            for e in errors:
                print(f"error: {e}", file=sys.stderr)
            return runner.EXIT_CONFIG
        print(runner.dump_config(cfg), end="")
        return runner.EXIT_OK

    if args.command == "plot":
        path = Path(args.in_dir) / "reports.json"
        try:
            with open(path, encoding="utf-8") as fh:
                reports = json.load(fh)
        except (OSError, ValueError) as exc:
            print(f"error: cannot read {path}: {exc}", file=sys.stderr)
            return runner.EXIT_CONFIG
        for f in emit_plots(reports, Path(args.in_dir) / "plots"):
            print(f)
        return runner.EXIT_OK

    modes = args.modes.split(",") if args.modes else None
    try:
        cfg = runner.load_config(args.config)
        cfg = runner.with_overrides(cfg, args.seed, args.out, args.workers, modes)
    except runner.ConfigErrors as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return runner.EXIT_CONFIG
    try:
        manifest = runner.run_battery(cfg, plots=not args.no_plots)
    except runner.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return runner.EXIT_CONFIG
    except CSSLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return runner.EXIT_RUNTIME
    for sid, err in manifest.doc["errors"].items():
        print(f"error: {sid}: {err}", file=sys.stderr)
    print(manifest.path)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())

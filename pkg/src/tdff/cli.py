"""Command line entry point: ``tdff <command> --config PATH [--threads N] [--verbose]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline
from .config import ConfigError, load_config
from .core import TdffError

COMMANDS = {
    "validate": "check metadata against every feature stream",
    "synth": "generate a synthetic dataset from the config's synthetic section",
    "fuse": "fuse the feature streams into work_dir/fused.tdff",
    "train": "train the template-specific SVMs of every split",
    "score": "score verification and identification comparisons",
    "eval": "compute metrics from the score files and write the report",
    "run": "all of the above, end to end",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdff", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline YAML file")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: available parallelism)")
        p.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: [config] {exc}", file=sys.stderr)
        return 2
    threads = args.threads or cfg.threads or os.cpu_count() or 1
    if threads < 1:
        print("error: [config] --threads must be >= 1", file=sys.stderr)
        return 2

    try:
        if args.command == "validate":
            reports = pipeline.validate_inputs(cfg)
            for name, report in reports.items():
                print(f"stream {name}: {report}")
            return 0 if all(r.ok for r in reports.values()) else 1
        if args.command == "synth":
            pipeline.synthesize(cfg)
        elif args.command == "fuse":
            pipeline.stage_fuse(cfg)
        elif args.command == "train":
            pipeline.stage_train(cfg, threads)
        elif args.command == "score":
            pipeline.stage_score(cfg, threads)
        elif args.command == "eval":
            print(pipeline.stage_eval(cfg).to_text(), end="")
        elif args.command == "run":
            print(pipeline.run_pipeline(cfg, threads).to_text(), end="")
    except TdffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

# runners/cli.py
from __future__ import annotations

# Deterministic local .env loading for parity with CI
from dotenv import load_dotenv
load_dotenv()

import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from kinoplan.config_loader import get_config
from kinoplan.errors import KinoplanError
from kinoplan.log import get_logger
from runners import (
    benchmark_runner,
    collect_runner,
    genmap_runner,
    latency_runner,
    navigate_runner,
    plan_runner,
    train_runner,
)

_logger = get_logger("kinoplan.cli")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinoplan", description="Kinodynamic planning toolkit for Dubins cars")
    parser.add_argument("--config", default=None, help="JSON file merged over config/defaults.json")
    sub = parser.add_subparsers(dest="command", required=True)
    for mod in (genmap_runner, collect_runner, train_runner, plan_runner, navigate_runner, benchmark_runner, latency_runner):
        p = sub.add_parser(mod.NAME, help=mod.HELP)
        mod.add_arguments(p)
        p.set_defaults(runner=mod)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 for --help
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        cfg = get_config(args.config)
        return args.runner.run(args, cfg)
    except (KinoplanError, ValidationError, OSError) as e:
        _logger.error("%s failed: %s", args.command, e)
        return EXIT_DOMAIN


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()

"""
trajpose command line - camera height and orientation from pedestrian trajectories

Usage:
    python -m console.app.main gen --config run.yaml --out runs/a
    python -m console.app.main train --config run.yaml --out runs/a
    python -m console.app.main eval --config run.yaml --out runs/a [--tracks tracks.csv --fps 25]
    python -m console.app.main sweep --config run.yaml --out runs/sweep --speeds 0.6,1.0,1.4
    python -m console.app.main reproject --config run.yaml --out runs/a --report runs/a/report.json

Exit status 0 on success, 2 on any pipeline error (reported as one ``E_<CODE>: message`` line
on stderr).
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import structlog
from dotenv import load_dotenv

from console.app.commands import COMMANDS
from console.app.run_config import load_config
from tools.core.errors import ConfigError, TrajPoseError
from tools.core.log import configure_logging

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, required=True, help="run config (YAML or JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--log-level", help="log level (default $TRAJPOSE_LOG_LEVEL or info)")

    parser = argparse.ArgumentParser(prog="trajpose", description=__doc__.splitlines()[1].strip())
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, command in COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[common], help=command.help)
        command.add_arguments(sub)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(level=args.log_level)

    try:
        config = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["output_dir"] = str(args.out)
        if overrides:
            config = config.model_copy(update=overrides)
        if config.seed < 0:
            raise ConfigError("seed: must be >= 0")

        command = COMMANDS[args.command](config, Path(config.output_dir), args)
        summary = command.run()
    except TrajPoseError as exc:
        logger.error("command_failed", command=args.command, error=exc.one_line())
        print(exc.one_line(), file=sys.stderr)
        return EXIT_FAILURE

    for line in summary:
        print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

import argparse
import logging
import sys
from typing import List, Optional

from config import config
from app.commands import common_options, matrices, orbit, suite
from app.exceptions import AluthgeError, NumericalError, UsageError

LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}

logger = logging.getLogger(__name__)


def configure_logging(mode: str) -> None:
    """Map ALUTHGE_LOG onto the root logger"""
    level = LOG_LEVELS.get(mode.lower())
    if level is None:
        raise UsageError(f"ALUTHGE_LOG must be one of {', '.join(LOG_LEVELS)}, got '{mode}'")
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    logging.getLogger().setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aluthge",
        description="Iterated Aluthge transforms, their limits and the geometry around fixed points",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = common_options()
    for group in (matrices, orbit, suite):
        group.register(subparsers, common)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage and 0 after --help
        return e.code if isinstance(e.code, int) else UsageError.exit_code

    try:
        configure_logging(config.LOG_MODE)
        logger.debug(f"Running '{args.command}'")
        return args.handler(args)
    except AluthgeError as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error in '{args.command}': {e}")
        return NumericalError.exit_code


if __name__ == "__main__":
    sys.exit(main())

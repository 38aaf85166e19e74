"""
Subcommand groups. Each module exposes ``register(subparsers, common)`` and
sets ``handler`` on its parsers; handlers return the process exit code.
"""

import argparse
from pathlib import Path

from config import config


def common_options() -> argparse.ArgumentParser:
    """Flags accepted by every subcommand"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol-conv", type=float, help="step tolerance of the stopping rule")
    common.add_argument("--tol-norm", type=float, help="normality tolerance of the stopping rule")
    common.add_argument("--max-iter", type=int, help="iteration cap")
    common.add_argument("--seed", type=int, help="seed for random instances and directions")
    common.add_argument("--out", help=f"output directory (default: {config.OUTPUT_DIR})")
    return common


def output_dir(args: argparse.Namespace) -> Path:
    path = Path(args.out or config.OUTPUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def limit_options(args: argparse.Namespace) -> dict:
    return dict(tol_conv=args.tol_conv, tol_norm=args.tol_norm, max_iter=args.max_iter)


def positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def non_negative_int(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return number

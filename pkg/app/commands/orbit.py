import argparse
import logging

import numpy as np

from config import config
from app.commands import output_dir, positive_int
from app.exceptions import NumericalError
from app.services import orbit_geometry
from app.services.linalg_core import random_complex
from app.services.matrix_io import format_number, matrix_to_payload, parse_diagonal, write_json

logger = logging.getLogger(__name__)


def cmd_kd(args: argparse.Namespace) -> int:
    """Contraction constant and the local-diffeomorphism flag of diag(d)"""
    ctx = orbit_geometry.orbit_context(parse_diagonal(args.diag))
    print(f"k_d: {format_number(ctx.k_d)}")
    print(f"local_diffeo: {str(not orbit_geometry.opposite_phase_pairs(ctx)).lower()}")
    return 0


def cmd_kit(args: argparse.Namespace) -> int:
    """Dump the Hadamard kit together with a summary record as kit.json"""
    ctx = orbit_geometry.orbit_context(parse_diagonal(args.diag))
    kit = orbit_geometry.build_kit(ctx)
    decomp = orbit_geometry.block_operators(ctx, kit)
    check = orbit_geometry.local_diffeo_check(ctx, kit, decomp)

    summary = {
        "r": ctx.r,
        "d": [[z.real, z.imag] for z in ctx.d],
        "k_d": ctx.k_d,
        "a1_norm": decomp.a1_norm,
        "local_diffeo": check.local_diffeo,
        "local_diffeo_smallest_sv": check.smallest_singular_value,
    }
    matrices = {name: matrix_to_payload(m) for name, m in kit.matrices().items()}
    path = write_json(output_dir(args) / "kit.json", {"summary": summary, "matrices": matrices})
    logger.info(f"Wrote derivative kit to {path}")

    print(f"k_d: {format_number(ctx.k_d)}")
    print(f"a1_norm: {format_number(decomp.a1_norm)}")
    print(f"local_diffeo: {str(check.local_diffeo).lower()}")
    return 0


def cmd_deriv_check(args: argparse.Namespace) -> int:
    """Analytic derivative at D against central differences along random directions"""
    d = parse_diagonal(args.diag)
    ctx = orbit_geometry.orbit_context(d)
    kit = orbit_geometry.build_kit(ctx)
    h = args.step or config.FD_STEP
    threshold = max(1e-5, 10 * h ** 2)
    rng = np.random.default_rng(args.seed)

    worst = discretization = 0.0
    for trial in range(args.trials):
        a = random_complex((ctx.r, ctx.r), rng)
        error = orbit_geometry.derivative_error(ctx, kit, a, h)
        # Richardson over (h, h/2) estimates the O(h^2) truncation of the central difference
        _, estimate = orbit_geometry.richardson_derivative(d, a, h)
        logger.debug(f"Direction {trial}: relative error {error:.3e}, discretization {estimate:.3e}")
        worst = max(worst, error)
        discretization = max(discretization, estimate)

    print(f"max_relative_error: {format_number(worst)}")
    print(f"max_discretization_error: {format_number(discretization)}")
    print(f"threshold: {format_number(threshold)}")
    if worst > threshold:
        raise NumericalError(f"analytic and finite-difference derivatives differ by {worst:.3e}")
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("kd", parents=[common], help="contraction constant k_D of a diagonal")
    parser.add_argument("--diag", required=True, help="diagonal entries, e.g. 1,2,3i")
    parser.set_defaults(handler=cmd_kd)

    parser = subparsers.add_parser("kit", parents=[common], help="dump the derivative kit matrices")
    parser.add_argument("--diag", required=True)
    parser.set_defaults(handler=cmd_kit)

    parser = subparsers.add_parser("deriv-check", parents=[common], help="finite-difference check of the derivative")
    parser.add_argument("--diag", required=True)
    parser.add_argument("--trials", type=positive_int, default=50)
    parser.add_argument("--step", type=float, help="finite-difference step h")
    parser.set_defaults(handler=cmd_deriv_check)

import argparse
import logging

import numpy as np

from app.commands import limit_options, non_negative_int, output_dir, positive_int
from app.exceptions import ConvergenceError
from app.models import SpectrumSpec
from app.services import aluthge
from app.services.experiments import random_diagonalizable
from app.services.linalg_core import frobenius_norm, normality_residual, spectrum
from app.services.matrix_io import (
    format_number,
    format_spectrum,
    parse_complex,
    parse_diagonal,
    read_matrix,
    write_json,
    write_matrix,
    write_trajectory,
)

logger = logging.getLogger(__name__)


def cmd_transform(args: argparse.Namespace) -> int:
    """Write D(T) and print its norm, normality residual and spectrum"""
    t = read_matrix(args.path)
    result = aluthge.aluthge(t)
    path = write_matrix(output_dir(args) / "transform.json", result)
    logger.info(f"Wrote transform to {path}")

    print(f"norm: {format_number(frobenius_norm(result))}")
    print(f"normality_residual: {format_number(normality_residual(result))}")
    print(f"spectrum: {format_spectrum(spectrum(result).as_list())}")
    return 0


def cmd_iterate(args: argparse.Namespace) -> int:
    t = read_matrix(args.path)
    trajectory = aluthge.iterate(t, args.steps)
    out = output_dir(args)
    write_trajectory(out, trajectory, dump_matrices=args.dump_matrices)
    write_matrix(out / "final.json", trajectory.iterates[-1])

    print(f"steps: {trajectory.steps}")
    print(f"final_step: {format_number(trajectory.distances[-1])}")
    print(f"final_normality: {format_number(trajectory.normality[-1])}")
    return 0


def cmd_limit(args: argparse.Namespace) -> int:
    t = read_matrix(args.path)
    report = aluthge.limit(
        t,
        keep_trajectory=True,
        reduce_singular=args.reduce_singular,
        identify_single_eigenvalue=args.identify_single_eigenvalue,
        **limit_options(args),
    )
    out = output_dir(args)
    if report.trajectory is not None:
        write_trajectory(out, report.trajectory, dump_matrices=args.dump_matrices)
    write_matrix(out / "limit.json", report.limit)
    write_json(out / "report.json", report.summary())

    print(f"converged: {report.converged}")
    print(f"method: {report.method}")
    print(f"iterations_used: {report.iterations_used}")
    print(f"final_step: {format_number(report.final_step)}")
    print(f"final_normality: {format_number(report.final_normality)}")
    print(f"spectrum: {format_spectrum(spectrum(report.limit).as_list())}")
    if not report.converged:
        return ConvergenceError.exit_code
    return 0


def cmd_multiplicity(args: argparse.Namespace) -> int:
    """Multiplicities of mu for T and, with --steps, along its iterates"""
    t = read_matrix(args.path)
    mu = parse_complex(args.mu)
    iterates = aluthge.iterate(t, args.steps).iterates if args.steps else [t]
    rows = []
    for k, x in enumerate(iterates):
        m = aluthge.multiplicities(x, mu)
        rows.append({"iter": k, "algebraic": m.algebraic, "geometric": m.geometric})
        print(f"iter {k}: algebraic {m.algebraic}, geometric {m.geometric}")
    write_json(output_dir(args) / "multiplicity.json", {"mu": [mu.real, mu.imag], "iterates": rows})
    return 0


def cmd_random(args: argparse.Namespace) -> int:
    if args.spectrum:
        spec = parse_diagonal(args.spectrum)
    else:
        spec = SpectrumSpec(max_kd=args.max_kd)
    instance = random_diagonalizable(args.size, spec, cond_bound=args.cond, seed=args.seed)
    out = output_dir(args)
    write_matrix(out / "random.json", instance.matrix)
    write_json(out / "random_meta.json", {
        "seed": args.seed,
        "condition": instance.condition,
        "spectrum": [[z.real, z.imag] for z in np.asarray(instance.diagonal, dtype=complex)],
    })

    print(f"condition: {format_number(instance.condition)}")
    print(f"spectrum: {format_spectrum(list(instance.diagonal))}")
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("transform", parents=[common], help="Aluthge transform of a matrix file")
    parser.add_argument("path")
    parser.set_defaults(handler=cmd_transform)

    parser = subparsers.add_parser("iterate", parents=[common], help="fixed number of iterations")
    parser.add_argument("path")
    parser.add_argument("--steps", type=non_negative_int, default=10)
    parser.add_argument("--dump-matrices", action="store_true", help="write every iterate as iter_<k>.json")
    parser.set_defaults(handler=cmd_iterate)

    parser = subparsers.add_parser("limit", parents=[common], help="iterate until convergence")
    parser.add_argument("path")
    parser.add_argument("--reduce-singular", action="store_true", help="split off the kernel before iterating")
    parser.add_argument(
        "--identify-single-eigenvalue",
        action="store_true",
        help="on hitting the cap, report lambda*I when the spectrum is a single point (still exit 4)",
    )
    parser.add_argument("--dump-matrices", action="store_true")
    parser.set_defaults(handler=cmd_limit)

    parser = subparsers.add_parser("multiplicity", parents=[common], help="algebraic and geometric multiplicity")
    parser.add_argument("path")
    parser.add_argument("--mu", default="0", help="eigenvalue, e.g. 0, 2, 1+i")
    parser.add_argument("--steps", type=non_negative_int, default=0, help="also report along n iterates")
    parser.set_defaults(handler=cmd_multiplicity)

    parser = subparsers.add_parser("random", parents=[common], help="random diagonalizable instance")
    parser.add_argument("--size", type=positive_int, required=True)
    parser.add_argument("--spectrum", help="explicit eigenvalues, e.g. 1,2,3i (default: random annulus)")
    parser.add_argument("--cond", type=float, default=100.0, help="eigenvector condition bound")
    parser.add_argument("--max-kd", type=float, help="cap on k_D for random spectra")
    parser.set_defaults(handler=cmd_random)


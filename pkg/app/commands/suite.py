import argparse
import logging

from config import config
from app.commands import limit_options, output_dir, positive_int
from app.exceptions import ConvergenceError
from app.services.aluthge import limit
from app.services.experiments import load_suite_config, rate_estimate, suite_exit_code, suite_runner
from app.services.linalg_core import spectrum
from app.services.matrix_io import format_number, parse_diagonal, read_matrix, write_json
from app.services.orbit_geometry import orbit_context

logger = logging.getLogger(__name__)


def cmd_suite(args: argparse.Namespace) -> int:
    """Run a seeded suite; exit 0 when every asserted trial converged"""
    cfg = load_suite_config(args.config)
    overrides = {key: value for key, value in dict(
        seed=args.seed,
        out=args.out,
        tol_conv=args.tol_conv,
        tol_norm=args.tol_norm,
        max_iter=args.max_iter,
        workers=args.workers,
        archive_url=args.archive,
    ).items() if value is not None}
    if overrides:
        cfg = cfg.model_copy(update=overrides)

    records = suite_runner.run_suite(cfg)
    converged = sum(record.converged for record in records if record.asserted)
    asserted = sum(record.asserted for record in records)
    print(f"trials: {len(records)}")
    print(f"asserted_converged: {converged}/{asserted}")
    print(f"rate_ok: {sum(bool(record.rate_ok) for record in records)}/{sum(record.rate_ok is not None for record in records)}")
    return suite_exit_code(records)


def cmd_rate(args: argparse.Namespace) -> int:
    """Empirical convergence rate of one matrix against k_D of its spectrum"""
    t = read_matrix(args.path)
    report = limit(t, keep_trajectory=True, **limit_options(args))
    if not report.converged:
        logger.error(f"No convergence within {report.iterations_used} iterations; rate not estimated")
        return ConvergenceError.exit_code

    if args.diag:
        ctx = orbit_context(parse_diagonal(args.diag))
    else:
        ctx = orbit_context(spectrum(t).eigenvalues, cluster_tol=config.TOL_EIG_MATCH)
    rate = rate_estimate(report.trajectory, report.limit, ctx)
    write_json(output_dir(args) / "rate.json", rate.model_dump())

    print(f"asymptotic_rate: {format_number(rate.asymptotic_rate)}")
    print(f"k_d: {format_number(rate.k_d_bound)}")
    print(f"satisfied: {str(rate.satisfied).lower()}")
    print(f"transient_length: {rate.transient_length}")
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("suite", parents=[common], help="run a seeded experiment suite")
    parser.add_argument("config", help="flat KEY=value suite file")
    parser.add_argument("--workers", type=positive_int, help="worker processes")
    parser.add_argument("--archive", help="SQLAlchemy URL of the run archive")
    parser.set_defaults(handler=cmd_suite)

    parser = subparsers.add_parser("rate", parents=[common], help="measured convergence rate against k_D")
    parser.add_argument("path")
    parser.add_argument("--diag", help="known diagonal D (default: the computed spectrum)")
    parser.set_defaults(handler=cmd_rate)

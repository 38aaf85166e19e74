"""
Random instances, convergence-rate estimation and seeded batch suites.
"""

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from dotenv import dotenv_values
from pydantic import ValidationError

from config import config
from app.exceptions import (
    AluthgeError,
    ConfigError,
    ConvergenceError,
    InsufficientDataError,
    SamplingError,
    UsageError,
)
from app.models import (
    ComplexMatrix,
    OrbitContext,
    RandomInstance,
    RateReport,
    SpectrumSpec,
    SuiteConfig,
    Trajectory,
    TrialRecord,
)
from app.services.aluthge import limit
from app.services.linalg_core import (
    _svd,
    _tol,
    adjoint,
    as_matrix,
    eigenvalues,
    frobenius_norm,
    random_complex,
    random_unitary,
    scale,
    spectrum_distance,
)
from app.services.matrix_io import trajectory_csv, write_json
from app.services.orbit_geometry import orbit_context

logger = logging.getLogger(__name__)

SUITE_COLUMNS = [
    "index", "kind", "size", "seed", "asserted", "converged", "method", "iterations",
    "final_normality", "spectrum_error", "asymptotic_rate", "k_d", "rate_ok",
    "transient_length", "error",
]


def _k_d(d: np.ndarray) -> float:
    return orbit_context(d).k_d


def random_spectrum(r: int, spec: SpectrumSpec, rng: np.random.Generator) -> np.ndarray:
    """
    r eigenvalues drawn uniformly (by area) from the annulus, resampled until
    they are pairwise separated and, if requested, k_D stays under max_kd
    """
    if r < 1:
        raise UsageError(f"size must be positive, got {r}")
    if spec.kind == "explicit":
        values = np.asarray(spec.values, dtype=complex)
        if len(values) != r:
            raise ConfigError(f"explicit spectrum has {len(values)} values, size is {r}")
        return values

    for draw in range(spec.max_draws):
        moduli = np.sqrt(rng.uniform(spec.min_modulus ** 2, spec.max_modulus ** 2, size=r))
        d = moduli * np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=r))
        gaps = np.where(np.eye(r, dtype=bool), np.inf, np.abs(d[:, None] - d[None, :]))
        if r > 1 and gaps.min() < spec.min_separation:
            continue
        if spec.max_kd is not None and _k_d(d) > spec.max_kd:
            continue
        if draw:
            logger.debug(f"Spectrum accepted after {draw + 1} draws")
        return d
    raise SamplingError(f"no admissible spectrum of size {r} after {spec.max_draws} draws")


def random_diagonalizable(
    r: int,
    spectrum: Union[SpectrumSpec, Sequence[complex]],
    cond_bound: float = 100.0,
    seed: Optional[int] = None,
) -> RandomInstance:
    """T = S diag(d) S^-1 with cond(S) <= cond_bound; cond_bound = 1 gives a normal T"""
    if cond_bound < 1:
        raise UsageError(f"cond_bound must be at least 1, got {cond_bound}")
    rng = np.random.default_rng(seed)
    if isinstance(spectrum, SpectrumSpec):
        d = random_spectrum(r, spectrum, rng)
    else:
        d = np.asarray(spectrum, dtype=complex)
        if len(d) != r:
            raise UsageError(f"spectrum has {len(d)} values, size is {r}")

    w, sv, vh = _svd(random_complex((r, r), rng))
    condition = float(sv[0] / sv[-1])
    if cond_bound == 1.0:
        sv = np.ones(r)
    elif condition > cond_bound:
        # log-scale compression keeps the singular vectors and hits the bound exactly
        alpha = np.log(cond_bound) / np.log(condition)
        sv = sv[0] * (sv / sv[0]) ** alpha
    s = (w * sv) @ vh
    condition = float(sv[0] / sv[-1])

    t = np.linalg.solve(s.T, (s * d).T).T
    return RandomInstance(matrix=t, diagonal=d, condition=condition, seed=seed)


def random_jordan(r: int, lam: complex = 1.0, seed: Optional[int] = None) -> RandomInstance:
    """Unitary conjugate of the r x r Jordan block at lam"""
    if r < 2:
        raise UsageError(f"Jordan block size must be at least 2, got {r}")
    rng = np.random.default_rng(seed)
    block = lam * np.eye(r, dtype=complex) + np.eye(r, k=1)
    u = random_unitary(r, rng)
    return RandomInstance(
        matrix=u @ block @ adjoint(u),
        diagonal=np.full(r, lam, dtype=complex),
        condition=float("inf"),
        seed=seed,
    )


def rate_estimate(
    trajectory: Trajectory,
    limit_matrix: ComplexMatrix,
    ctx: OrbitContext,
    rate_slack: Optional[float] = None,
) -> RateReport:
    """
    Ratios ||D^{k+1}(T) - L|| / ||D^k(T) - L|| and their geometric mean over
    the last max(5, n/4) usable steps, compared with k_D + rate_slack
    """
    rate_slack = _tol(rate_slack, config.RATE_SLACK)
    limit_matrix = np.asarray(limit_matrix, dtype=complex)
    floor = 100 * np.finfo(float).eps * scale(limit_matrix)
    errors = [frobenius_norm(x - limit_matrix) for x in trajectory.iterates]

    ratios: List[float] = []
    for before, after in zip(errors, errors[1:]):
        if before <= floor or after <= floor:
            break
        ratios.append(after / before)

    reached_floor = min(errors) <= floor
    if len(ratios) < 3 and not reached_floor:
        raise InsufficientDataError(f"only {len(ratios)} usable ratios and the trajectory never reached the limit")

    bound = ctx.k_d + rate_slack
    if ratios:
        window = min(len(ratios), max(5, len(ratios) // 4))
        rate = float(np.exp(np.mean(np.log(ratios[-window:]))))
    else:
        window, rate = 0, 0.0

    transient = len(ratios)
    while transient > 0 and ratios[transient - 1] <= bound:
        transient -= 1

    return RateReport(
        ratios=ratios,
        asymptotic_rate=rate,
        k_d_bound=ctx.k_d,
        rate_slack=rate_slack,
        satisfied=rate <= bound,
        transient_length=transient,
        window=window,
    )


def trial_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


class TrialTask(NamedTuple):
    index: int
    kind: str
    size: int


def plan_trials(cfg: SuiteConfig) -> List[TrialTask]:
    tasks = [TrialTask(0, "diagonalizable", size) for size in cfg.sizes for _ in range(cfg.trials)]
    tasks += [TrialTask(0, "jordan", cfg.jordan_size)] * cfg.jordan_trials
    return [task._replace(index=index) for index, task in enumerate(tasks)]


def run_trial(task: TrialTask, cfg: SuiteConfig) -> TrialRecord:
    """One seeded trial; numerical failures end up in the record, not raised"""
    seed = trial_seed(cfg.seed, task.index)
    asserted = task.kind == "diagonalizable"
    fields: Dict[str, object] = dict(
        index=task.index, kind=task.kind, size=task.size, seed=seed, asserted=asserted, converged=False,
    )
    report = None
    try:
        if asserted:
            instance = random_diagonalizable(task.size, cfg.spectrum, cfg.cond_bound, seed)
        else:
            instance = random_jordan(task.size, cfg.jordan_eigenvalue, seed)

        report = limit(
            instance.matrix,
            tol_conv=cfg.tol_conv,
            tol_norm=cfg.tol_norm,
            max_iter=cfg.max_iter,
            keep_trajectory=True,
        )
        fields.update(
            converged=report.converged,
            method=report.method,
            iterations=report.iterations_used,
            final_normality=report.final_normality,
            spectrum_error=spectrum_distance(eigenvalues(report.limit), instance.diagonal),
        )
        if asserted:
            ctx = orbit_context(instance.diagonal)
            fields["k_d"] = ctx.k_d
            if report.converged:
                rate = rate_estimate(report.trajectory, report.limit, ctx, cfg.rate_slack)
                fields.update(
                    asymptotic_rate=rate.asymptotic_rate,
                    rate_ok=rate.satisfied,
                    transient_length=rate.transient_length,
                )
    except AluthgeError as e:
        logger.warning(f"Trial {task.index} failed: {e.detail}")
        fields["error"] = f"{type(e).__name__}: {e.detail}"
    except Exception as e:
        logger.error(f"Unexpected error in trial {task.index}: {e}")
        fields["error"] = f"{type(e).__name__}: {e}"

    keep = not fields["converged"] or fields.get("rate_ok") is False
    if keep and report is not None and report.trajectory is not None:
        fields["trajectory_csv"] = trajectory_csv(report.trajectory)
    return TrialRecord(**fields)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_csv(records: List[TrialRecord]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SUITE_COLUMNS)
    for record in records:
        row = record.model_dump()
        writer.writerow([_format_cell(row[column]) for column in SUITE_COLUMNS])
    return buffer.getvalue()


def records_jsonl(records: List[TrialRecord]) -> str:
    return "".join(json.dumps(record.model_dump(), sort_keys=True) + "\n" for record in records)


def suite_exit_code(records: List[TrialRecord]) -> int:
    """0 when every asserted trial converged, 4 otherwise"""
    return 0 if all(record.converged for record in records if record.asserted) else ConvergenceError.exit_code


def suite_summary(cfg: SuiteConfig, records: List[TrialRecord]) -> Dict[str, object]:
    asserted = [record for record in records if record.asserted]
    checked = [record for record in records if record.rate_ok is not None]
    return {
        "seed": cfg.seed,
        "n_trials": len(records),
        "n_asserted": len(asserted),
        "n_converged": sum(record.converged for record in records),
        "n_asserted_converged": sum(record.converged for record in asserted),
        "n_rate_checked": len(checked),
        "n_rate_ok": sum(bool(record.rate_ok) for record in checked),
        "n_errors": sum(record.error is not None for record in records),
        "exit_code": suite_exit_code(records),
    }


_SUITE_KEYS = {
    "SIZES": "sizes",
    "TRIALS": "trials",
    "COND_BOUND": "cond_bound",
    "SEED": "seed",
    "TOL_CONV": "tol_conv",
    "TOL_NORM": "tol_norm",
    "MAX_ITER": "max_iter",
    "RATE_SLACK": "rate_slack",
    "JORDAN_TRIALS": "jordan_trials",
    "JORDAN_SIZE": "jordan_size",
    "JORDAN_EIGENVALUE": "jordan_eigenvalue",
    "WORKERS": "workers",
    "OUT": "out",
    "ARCHIVE_URL": "archive_url",
}
_SPECTRUM_KEYS = {
    "MIN_MODULUS": "min_modulus",
    "MAX_MODULUS": "max_modulus",
    "MIN_SEPARATION": "min_separation",
    "MAX_KD": "max_kd",
    "MAX_DRAWS": "max_draws",
}


def load_suite_config(path: Union[str, Path]) -> SuiteConfig:
    """Parse a flat KEY=value suite file into a SuiteConfig"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"suite config {path} not found")
    values = {key.upper(): value for key, value in dotenv_values(path).items() if value not in (None, "")}

    unknown = set(values) - set(_SUITE_KEYS) - set(_SPECTRUM_KEYS) - {"SPECTRUM"}
    if unknown:
        raise ConfigError(f"unknown suite config keys: {', '.join(sorted(unknown))}")

    fields: Dict[str, object] = {_SUITE_KEYS[key]: value for key, value in values.items() if key in _SUITE_KEYS}
    spectrum: Dict[str, object] = {_SPECTRUM_KEYS[key]: value for key, value in values.items() if key in _SPECTRUM_KEYS}
    kind = values.get("SPECTRUM", "annulus")
    if kind.strip().lower() == "annulus":
        spectrum["kind"] = "annulus"
    else:
        spectrum.update(kind="explicit", values=kind)
    fields["spectrum"] = spectrum

    try:
        return SuiteConfig.model_validate(fields)
    except (ValidationError, AluthgeError) as e:
        raise ConfigError(f"invalid suite config {path}: {e}") from e


class SuiteRunner:
    """Runs seeded trial batches and writes their records"""

    def run_suite(self, cfg: SuiteConfig, out_dir: Optional[Union[str, Path]] = None) -> List[TrialRecord]:
        out_dir = Path(out_dir or cfg.out)
        tasks = plan_trials(cfg)
        logger.info(f"Starting suite: {len(tasks)} trials, seed {cfg.seed}, {cfg.workers} worker(s)")

        if cfg.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                records = list(pool.map(run_trial, tasks, [cfg] * len(tasks)))
        else:
            records = [run_trial(task, cfg) for task in tasks]
        records.sort(key=lambda record: record.index)

        for record in records:
            if record.converged:
                logger.info(f"Trial {record.index} ({record.kind}, r={record.size}) converged in {record.iterations} iterations")
            else:
                logger.warning(f"Trial {record.index} ({record.kind}, r={record.size}) did not converge")
            if record.rate_ok is False:
                logger.warning(f"Trial {record.index}: rate {record.asymptotic_rate:.4f} above k_D {record.k_d:.4f}")

        self.write_outputs(out_dir, cfg, records)

        archive_url = cfg.archive_url or config.ARCHIVE_URL
        if archive_url:
            from app.services.archive import archive_suite_run
            archive_suite_run(archive_url, cfg, records)

        summary = suite_summary(cfg, records)
        logger.info(
            f"Suite completed: {summary['n_asserted_converged']}/{summary['n_asserted']} asserted trials converged, "
            f"rate check {summary['n_rate_ok']}/{summary['n_rate_checked']}"
        )
        return records

    def write_outputs(self, out_dir: Path, cfg: SuiteConfig, records: List[TrialRecord]) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "suite.csv").write_text(records_csv(records))
        (out_dir / "suite.jsonl").write_text(records_jsonl(records))
        write_json(out_dir / "summary.json", suite_summary(cfg, records))

        failures = [record for record in records if record.trajectory_csv]
        if failures:
            failure_dir = out_dir / "failures"
            failure_dir.mkdir(exist_ok=True)
            for record in failures:
                (failure_dir / f"trial_{record.index}.csv").write_text(record.trajectory_csv)
            logger.info(f"Archived {len(failures)} trajectories under {failure_dir}")


def perturbation_continuity_check(
    t: ComplexMatrix,
    epsilon: float = 1e-6,
    trials: int = 5,
    seed: Optional[int] = None,
    kinds: Sequence[str] = ("orbit", "spectral"),
) -> float:
    """
    Largest ||lim D^n(T') - lim D^n(T)||_2 over perturbations T' of size
    epsilon: within the similarity orbit (e^{eG} T e^{-eG}) and across nearby
    spectra (T = V diag(l) V^-1 with l moved)
    """
    t = as_matrix(t)
    if epsilon < 0 or trials < 1:
        raise UsageError("epsilon must be non-negative and trials positive")
    if epsilon == 0:
        return 0.0
    unknown = set(kinds) - {"orbit", "spectral"}
    if unknown:
        raise UsageError(f"unknown perturbation kinds: {', '.join(sorted(unknown))}")

    rng = np.random.default_rng(seed)
    r = t.shape[0]
    base = _converged_limit(t)

    if "spectral" in kinds:
        lam, v = np.linalg.eig(t)
        gaps = np.where(np.eye(r, dtype=bool), np.inf, np.abs(lam[:, None] - lam[None, :]))
        if r > 1 and gaps.min() <= config.TOL_GAP * scale(t):
            raise UsageError("spectral perturbations need distinct eigenvalues")

    deviation = 0.0
    for _ in range(trials):
        for kind in kinds:
            if kind == "orbit":
                g = random_complex((r, r), rng)
                g /= frobenius_norm(g)
                perturbed = scipy.linalg.expm(epsilon * g) @ t @ scipy.linalg.expm(-epsilon * g)
            else:
                shift = random_complex(r, rng)
                shift /= np.abs(shift)
                perturbed = np.linalg.solve(v.T, (v * (lam + epsilon * shift)).T).T
            moved = _converged_limit(perturbed)
            deviation = max(deviation, frobenius_norm(moved - base))

    logger.info(f"Limit deviation {deviation:.3e} for perturbations of size {epsilon:.1e}")
    return deviation


def _converged_limit(t: ComplexMatrix) -> ComplexMatrix:
    report = limit(t)
    if not report.converged:
        raise ConvergenceError(f"iteration did not converge within {report.iterations_used} iterations")
    return report.limit


suite_runner = SuiteRunner()

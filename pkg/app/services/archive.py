import logging
from typing import Dict, List, Tuple

from app.database import init_db, session_scope
from app.exceptions import ConfigError
from app.models import SuiteConfig, SuiteRun, SuiteTrial, TrialRecord

logger = logging.getLogger(__name__)

_RECORD_FIELDS = [name for name in TrialRecord.model_fields if name != "index"]


def archive_suite_run(url: str, cfg: SuiteConfig, records: List[TrialRecord]) -> int:
    """Store one suite run and its trial records; returns the run id"""
    init_db(url)
    with session_scope(url) as db:
        run = SuiteRun(
            seed=cfg.seed,
            config_json=cfg.model_dump_json(),
            n_trials=len(records),
            n_converged=sum(record.converged for record in records),
        )
        for record in records:
            values = {name: getattr(record, name) for name in _RECORD_FIELDS}
            run.trials.append(SuiteTrial(trial_index=record.index, **values))
        db.add(run)
        db.flush()
        run_id = run.id

    logger.info(f"Archived suite run {run_id} with {len(records)} trials")
    return run_id


def load_suite_run(url: str, run_id: int) -> Tuple[Dict[str, object], List[TrialRecord]]:
    """Run metadata and its records, ordered by trial index"""
    with session_scope(url) as db:
        run = db.get(SuiteRun, run_id)
        if run is None:
            raise ConfigError(f"no archived suite run with id {run_id}")
        meta = {
            "id": run.id,
            "seed": run.seed,
            "config": SuiteConfig.model_validate_json(run.config_json),
            "n_trials": run.n_trials,
            "n_converged": run.n_converged,
            "created_at": run.created_at,
        }
        trials = sorted(run.trials, key=lambda trial: trial.trial_index)
        records = [
            TrialRecord(index=trial.trial_index, **{name: getattr(trial, name) for name in _RECORD_FIELDS})
            for trial in trials
        ]
    return meta, records

import pytest
from sqlalchemy import func, select

from app.database import session_scope
from app.exceptions import ConfigError
from app.models import SpectrumSpec, SuiteConfig, SuiteTrial, TrialRecord
from app.services.archive import archive_suite_run, load_suite_run
from app.services.experiments import suite_runner


@pytest.fixture
def archive_url(tmp_path):
    return f"sqlite:///{tmp_path / 'runs.db'}"


def make_records():
    return [
        TrialRecord(
            index=0, kind="diagonalizable", size=2, seed=2**40 + 3, asserted=True, converged=True,
            method="iteration", iterations=412, final_normality=3.2e-12, spectrum_error=1.1e-14,
            asymptotic_rate=0.9401, k_d=0.9428090415820634, rate_ok=True, transient_length=0,
        ),
        TrialRecord(
            index=1, kind="jordan", size=3, seed=17, asserted=False, converged=False,
            error="ConvergenceError: no convergence", trajectory_csv="iter,step_norm\n0,1.0\n",
        ),
    ]


def test_round_trip(archive_url):
    cfg = SuiteConfig(sizes=[2], trials=1, seed=5, spectrum=SpectrumSpec(kind="explicit", values=[1, 2j]))
    records = make_records()
    run_id = archive_suite_run(archive_url, cfg, records)

    meta, loaded = load_suite_run(archive_url, run_id)
    assert meta["seed"] == 5
    assert meta["n_trials"] == 2
    assert meta["n_converged"] == 1
    assert meta["config"].model_dump() == cfg.model_dump()
    assert [record.model_dump() for record in loaded] == [record.model_dump() for record in records]
    assert loaded[1].trajectory_csv == records[1].trajectory_csv


def test_runs_get_separate_ids(archive_url):
    cfg = SuiteConfig()
    first = archive_suite_run(archive_url, cfg, [])
    second = archive_suite_run(archive_url, cfg, make_records())
    assert second != first
    assert load_suite_run(archive_url, first)[1] == []
    assert len(load_suite_run(archive_url, second)[1]) == 2


def test_missing_run(archive_url):
    archive_suite_run(archive_url, SuiteConfig(), [])
    with pytest.raises(ConfigError):
        load_suite_run(archive_url, 999)


def test_suite_runner_archives(archive_url, tmp_path):
    cfg = SuiteConfig(sizes=[2], trials=2, seed=3, archive_url=archive_url)
    suite_runner.run_suite(cfg, tmp_path / "out")
    with session_scope(archive_url) as db:
        assert db.scalar(select(func.count()).select_from(SuiteTrial)) == 2

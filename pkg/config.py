import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _float(name: str, default: str) -> float:
    return float(os.getenv(name, default))


class Config:
    # Linear-algebra kernel tolerances
    TOL_HERM: float = _float("TOL_HERM", "1e-10")
    TOL_PSD: float = _float("TOL_PSD", "1e-10")
    TOL_RECON: float = _float("TOL_RECON", "1e-10")
    TOL_EIG_MATCH: float = _float("TOL_EIG_MATCH", "1e-8")
    TOL_RANK: float = _float("TOL_RANK", "1e-10")
    TOL_INV: float = _float("TOL_INV", "1e-12")
    TOL_GAP: float = _float("TOL_GAP", "1e-10")
    TOL_UNITARY: float = _float("TOL_UNITARY", "1e-10")

    # Iteration / convergence
    TOL_CONV: float = _float("TOL_CONV", "1e-11")
    TOL_NORM: float = _float("TOL_NORM", "1e-9")
    MAX_ITER: int = int(os.getenv("MAX_ITER", "10000"))
    TOL_ORTHO: float = _float("TOL_ORTHO", "1e-8")

    # Tangent-space machinery
    FD_STEP: float = _float("FD_STEP", "1e-5")
    RATE_SLACK: float = _float("RATE_SLACK", "0.02")

    # Output / archive
    OUTPUT_DIR: str = os.getenv("ALUTHGE_OUT", "out")
    ARCHIVE_URL: str = os.getenv("ARCHIVE_URL", "")
    SUITE_WORKERS: int = int(os.getenv("SUITE_WORKERS", "1"))

    # Logging Configuration: quiet | info | debug
    LOG_MODE: str = os.getenv("ALUTHGE_LOG", "info")


config = Config()

import json
from pathlib import Path

import numpy as np
from hypothesis import strategies as st

from app.services.linalg_core import random_complex, random_unitary
from app.services.matrix_io import write_matrix

REPO_ROOT = Path(__file__).resolve().parent.parent
SMALL_SUITE = REPO_ROOT / "suites" / "small_suite.env"

sizes = st.integers(min_value=2, max_value=6)
seeds = st.integers(min_value=0, max_value=2**32 - 1)

JORDAN_2 = np.array([[0, 1], [0, 0]], dtype=complex)
UPPER_12 = np.array([[1, 1], [0, 2]], dtype=complex)
SWAP_2 = np.array([[0, 2], [1, 0]], dtype=complex)

# Diagonals used throughout the derivative and contraction checks
DIAGONALS = [(1, 2), (1, 1j), (1, 2, 3j), (1, -1 + 0.1j)]


def random_matrix(seed: int, r: int) -> np.ndarray:
    return random_complex((r, r), np.random.default_rng(seed))


def random_unitary_from(seed: int, r: int) -> np.ndarray:
    return random_unitary(r, np.random.default_rng(seed))


def similar_to(d, seed: int, spread: float = 0.3) -> np.ndarray:
    """S diag(d) S^-1 with S = I + spread * G"""
    d = np.asarray(d, dtype=complex)
    rng = np.random.default_rng(seed)
    s = np.eye(len(d)) + spread * random_complex((len(d), len(d)), rng) / len(d)
    return s @ np.diag(d) @ np.linalg.inv(s)


def save(tmp_path: Path, name: str, t) -> str:
    return str(write_matrix(tmp_path / name, np.asarray(t, dtype=complex)))


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())

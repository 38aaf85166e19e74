"""
File formats shared by every command: JSON matrices, trajectory CSV and
inline complex diagonals.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import List, Union

import numpy as np
from pydantic import ValidationError

from app.exceptions import MatrixFormatError, UsageError
from app.models import ComplexMatrix, MatrixPayload, Trajectory

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRAJECTORY_COLUMNS = ["iter", "step_norm", "normality_residual", "frobenius_norm"]


def matrix_to_payload(t: ComplexMatrix) -> dict:
    t = np.asarray(t, dtype=complex)
    rows, cols = t.shape
    return {
        "rows": rows,
        "cols": cols,
        "data": [[float(z.real), float(z.imag)] for z in t.reshape(-1)],
    }


def payload_to_matrix(payload: dict) -> ComplexMatrix:
    try:
        parsed = MatrixPayload.model_validate(payload)
    except ValidationError as e:
        raise MatrixFormatError(f"invalid matrix payload: {e}") from e
    if parsed.rows != parsed.cols:
        raise MatrixFormatError(f"matrix must be square, got {parsed.rows}x{parsed.cols}")
    values = np.array([complex(re, im) for re, im in parsed.data], dtype=complex)
    if not np.all(np.isfinite(values)):
        raise MatrixFormatError("matrix has non-finite entries")
    return values.reshape(parsed.rows, parsed.cols)


def dumps_matrix(t: ComplexMatrix) -> str:
    # json writes floats with their shortest round-tripping repr
    return json.dumps(matrix_to_payload(t))


def loads_matrix(text: str) -> ComplexMatrix:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise MatrixFormatError(f"matrix file is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise MatrixFormatError("matrix file must hold a JSON object")
    return payload_to_matrix(payload)


def read_matrix(path: PathLike) -> ComplexMatrix:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise MatrixFormatError(f"cannot read matrix file {path}: {e}") from e
    return loads_matrix(text)


def write_matrix(path: PathLike, t: ComplexMatrix) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_matrix(t) + "\n")
    logger.debug(f"Wrote matrix to {path}")
    return path


def write_json(path: PathLike, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def trajectory_csv(trajectory: Trajectory) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for k, (step, residual, norm) in enumerate(
        zip(trajectory.distances, trajectory.normality, trajectory.frobenius_norms)
    ):
        writer.writerow([k, repr(step), repr(residual), repr(norm)])
    return buffer.getvalue()


def write_trajectory(out_dir: PathLike, trajectory: Trajectory, dump_matrices: bool = False) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "trajectory.csv"
    path.write_text(trajectory_csv(trajectory))
    if dump_matrices:
        for k, iterate in enumerate(trajectory.iterates):
            write_matrix(out_dir / f"iter_{k}.json", iterate)
    logger.info(f"Wrote trajectory with {trajectory.steps} steps to {path}")
    return path


def parse_complex(token: str) -> complex:
    """Parse `a+bi` style scalars: 1, -1, 3i, i, -0.5+2i, 1e-3-2.5i"""
    text = token.strip().replace(" ", "")
    if not text or "j" in text.lower():
        raise UsageError(f"invalid complex entry '{token}'")
    try:
        value = complex(text.replace("i", "j"))
    except ValueError as e:
        raise UsageError(f"invalid complex entry '{token}'") from e
    if not np.isfinite(value):
        raise UsageError(f"non-finite complex entry '{token}'")
    return value


def parse_diagonal(text: str) -> np.ndarray:
    """Comma-separated inline diagonal, e.g. `1,2,3i`"""
    tokens = [token for token in text.split(",")]
    if not text or any(not token.strip() for token in tokens):
        raise UsageError(f"invalid diagonal '{text}'")
    return np.array([parse_complex(token) for token in tokens], dtype=complex)


def format_number(x) -> str:
    """Human-oriented stdout formatting, 16 significant digits"""
    if isinstance(x, (complex, np.complexfloating)):
        z = complex(x)
        if z.imag == 0:
            return f"{z.real:.16g}"
        sign = "+" if z.imag >= 0 else "-"
        return f"{z.real:.16g}{sign}{abs(z.imag):.16g}i"
    return f"{float(x):.16g}"


def format_spectrum(values: List[complex]) -> str:
    return "[" + ", ".join(format_number(z) for z in values) + "]"

from sqlalchemy import BigInteger, Column, Integer, String, Text, Boolean, DateTime, Float, ForeignKey
from sqlalchemy.orm import relationship
from sqlalchemy.sql import func
from app.database import Base
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator
from typing import Dict, List, Literal, NamedTuple, Optional, Tuple
import numpy as np

# A dense square complex128 array; validated by linalg_core.as_matrix
ComplexMatrix = np.ndarray


# SQLAlchemy Models (run archive)
class SuiteRun(Base):
    __tablename__ = "suite_runs"

    id = Column(Integer, primary_key=True, index=True)
    seed = Column(BigInteger, nullable=False)
    config_json = Column(Text, nullable=False)
    n_trials = Column(Integer, nullable=False)
    n_converged = Column(Integer, nullable=False)
    created_at = Column(DateTime(timezone=True), server_default=func.now())

    trials = relationship("SuiteTrial", back_populates="run", cascade="all, delete-orphan")


class SuiteTrial(Base):
    __tablename__ = "suite_trials"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("suite_runs.id", ondelete="CASCADE"), nullable=False)
    trial_index = Column(Integer, nullable=False)
    kind = Column(String(32), nullable=False)
    size = Column(Integer, nullable=False)
    seed = Column(BigInteger, nullable=False)
    asserted = Column(Boolean, default=True)
    converged = Column(Boolean, default=False)
    method = Column(String(32))
    iterations = Column(Integer)
    final_normality = Column(Float)
    spectrum_error = Column(Float)
    asymptotic_rate = Column(Float)
    k_d = Column(Float)
    rate_ok = Column(Boolean)
    transient_length = Column(Integer)
    error = Column(Text)
    trajectory_csv = Column(Text)

    run = relationship("SuiteRun", back_populates="trials")


# Pydantic Models
class FrozenModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class PolarParts(FrozenModel):
    """T = unitary @ modulus with modulus = (T*T)^(1/2)"""
    unitary: ComplexMatrix
    modulus: ComplexMatrix


class Spectrum(FrozenModel):
    """Eigenvalues with algebraic multiplicity, sorted by (Re, Im)"""
    eigenvalues: np.ndarray

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def as_list(self) -> List[complex]:
        return [complex(z) for z in self.eigenvalues]


class Trajectory(FrozenModel):
    start: ComplexMatrix
    iterates: List[ComplexMatrix]
    # distances[k] = ||iterates[k+1] - iterates[k]||_2, the last one looking one step ahead
    distances: List[float]
    normality: List[float]

    @property
    def steps(self) -> int:
        return len(self.iterates) - 1

    @property
    def frobenius_norms(self) -> List[float]:
        return [float(np.linalg.norm(x)) for x in self.iterates]


class LimitReport(FrozenModel):
    limit: ComplexMatrix
    iterations_used: int
    converged: bool
    final_step: float
    final_normality: float
    method: Literal["iteration", "single_eigenvalue", "reduced"] = "iteration"
    trajectory: Optional[Trajectory] = None

    def summary(self) -> Dict[str, object]:
        return {
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "final_step": self.final_step,
            "final_normality": self.final_normality,
            "method": self.method,
        }


class SplitResult(NamedTuple):
    unitary: ComplexMatrix
    invertible_block: ComplexMatrix
    zero_dim: int


class Multiplicities(NamedTuple):
    algebraic: int
    geometric: int


class OrbitContext(FrozenModel):
    """Diagonal data of D and its contraction constant"""
    d: np.ndarray
    moduli: np.ndarray
    phases: np.ndarray
    equal: np.ndarray
    k_d: float

    @property
    def r(self) -> int:
        return len(self.d)

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        """Ordered index pairs (i, j) with d_i != d_j, row-major"""
        return [(i, j) for i in range(self.r) for j in range(self.r) if not self.equal[i, j]]

    @property
    def diagonal(self) -> ComplexMatrix:
        return np.diag(self.d)


class DerivativeKit(FrozenModel):
    J: ComplexMatrix
    K: ComplexMatrix
    L: ComplexMatrix
    M: ComplexMatrix
    N: ComplexMatrix
    R: ComplexMatrix
    T_plus: ComplexMatrix
    T_minus: ComplexMatrix
    H: ComplexMatrix
    H1: ComplexMatrix
    H2: ComplexMatrix

    def matrices(self) -> Dict[str, ComplexMatrix]:
        return {name: getattr(self, name) for name in type(self).model_fields}


class TangentDecomposition(FrozenModel):
    """
    Real-linear operators on T_N O(D), N = frame D frame*.

    Tangent vectors are represented by stacked (Re, Im) coordinates over the
    unequal pairs; with respect to Re tr(B*A) these coordinates are orthonormal,
    so operator norms are plain spectral norms of the real matrices below.
    """
    r: int
    pairs: List[Tuple[int, int]]
    frame: Optional[ComplexMatrix] = None
    tangent_basis: List[ComplexMatrix]
    unitary_tangent_basis: List[ComplexMatrix]
    q_op: Optional[np.ndarray] = None
    derivative_op: Optional[np.ndarray] = None
    range_basis: Optional[np.ndarray] = None
    kernel_basis: Optional[np.ndarray] = None
    a1_op: Optional[np.ndarray] = None
    a2_op: Optional[np.ndarray] = None
    p_op: Optional[np.ndarray] = None
    stable_basis: Optional[List[ComplexMatrix]] = None

    @property
    def dim(self) -> int:
        """Real dimension of the tangent space"""
        return 2 * len(self.pairs)

    @property
    def a1_norm(self) -> float:
        if self.a1_op is None:
            raise ValueError("block operators not built")
        if self.a1_op.size == 0:
            return 0.0
        return float(np.linalg.norm(self.a1_op, 2))

    def _to_d_frame(self, x: ComplexMatrix) -> ComplexMatrix:
        if self.frame is None:
            return x
        return self.frame.conj().T @ x @ self.frame

    def _from_d_frame(self, x: ComplexMatrix) -> ComplexMatrix:
        if self.frame is None:
            return x
        return self.frame @ x @ self.frame.conj().T

    def coords(self, x: ComplexMatrix) -> np.ndarray:
        y = self._to_d_frame(np.asarray(x, dtype=complex))
        if not self.pairs:
            return np.zeros(0)
        rows, cols = zip(*self.pairs)
        entries = y[list(rows), list(cols)]
        return np.concatenate([entries.real, entries.imag])

    def from_coords(self, v: np.ndarray) -> ComplexMatrix:
        m = len(self.pairs)
        y = np.zeros((self.r, self.r), dtype=complex)
        for k, (i, j) in enumerate(self.pairs):
            y[i, j] = v[k] + 1j * v[m + k]
        return self._from_d_frame(y)

    def apply(self, op: np.ndarray, x: ComplexMatrix) -> ComplexMatrix:
        """Apply a real operator matrix to a tangent vector given as a matrix"""
        return self.from_coords(op @ self.coords(x))


class DiffeoCheck(FrozenModel):
    local_diffeo: bool
    smallest_singular_value: Optional[float]
    numeric_agrees: bool


class RateReport(FrozenModel):
    ratios: List[float]
    asymptotic_rate: float
    k_d_bound: float
    rate_slack: float
    satisfied: bool
    transient_length: int
    window: int


class RandomInstance(FrozenModel):
    matrix: ComplexMatrix
    diagonal: np.ndarray
    condition: float
    seed: Optional[int] = None


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class SpectrumSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: Literal["annulus", "explicit"] = "annulus"
    values: Optional[List[complex]] = None
    min_modulus: float = Field(0.2, gt=0)
    max_modulus: float = Field(2.0, gt=0)
    min_separation: float = Field(0.05, ge=0)
    max_kd: Optional[float] = None
    max_draws: int = Field(1000, ge=1)

    @field_validator("values", mode="before")
    @classmethod
    def parse_values(cls, value):
        if value is None:
            return None
        from app.services.matrix_io import parse_complex
        parsed = []
        for v in _split_list(value):
            if isinstance(v, str):
                parsed.append(parse_complex(v))
            elif isinstance(v, (list, tuple)):
                parsed.append(complex(*v))
            else:
                parsed.append(complex(v))
        return parsed

    @field_serializer("values")
    def dump_values(self, values):
        # [re, im] pairs, the same convention as matrix files
        if values is None:
            return None
        return [[v.real, v.imag] for v in values]

    @model_validator(mode="after")
    def check_consistency(self):
        if self.kind == "explicit" and not self.values:
            raise ValueError("explicit spectrum needs values")
        if self.min_modulus > self.max_modulus:
            raise ValueError("min_modulus exceeds max_modulus")
        return self


class SuiteConfig(BaseModel):
    sizes: List[int] = []
    trials: int = Field(10, ge=0)
    spectrum: SpectrumSpec = SpectrumSpec()
    cond_bound: float = Field(100.0, ge=1.0)
    seed: int = 0
    tol_conv: Optional[float] = None
    tol_norm: Optional[float] = None
    max_iter: Optional[int] = None
    rate_slack: Optional[float] = None
    jordan_trials: int = Field(0, ge=0)
    jordan_size: int = Field(3, ge=2)
    jordan_eigenvalue: float = 1.0
    workers: int = Field(1, ge=1)
    out: str = "out"
    archive_url: Optional[str] = None

    @field_validator("sizes", mode="before")
    @classmethod
    def parse_sizes(cls, value):
        return [int(v) for v in _split_list(value)]

    @field_validator("sizes")
    @classmethod
    def check_sizes(cls, value):
        if any(size < 1 for size in value):
            raise ValueError("sizes must be positive")
        return value


class TrialRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    kind: Literal["diagonalizable", "jordan"]
    size: int
    seed: int
    asserted: bool
    converged: bool
    method: Optional[str] = None
    iterations: Optional[int] = None
    final_normality: Optional[float] = None
    spectrum_error: Optional[float] = None
    asymptotic_rate: Optional[float] = None
    k_d: Optional[float] = None
    rate_ok: Optional[bool] = None
    transient_length: Optional[int] = None
    error: Optional[str] = None
    # Trajectory CSV kept for failed or rate-violating trials only; not part of the CSV row
    trajectory_csv: Optional[str] = Field(None, exclude=True)


class MatrixPayload(BaseModel):
    """On-disk matrix: {"rows": r, "cols": r, "data": [[re, im], ...]} row-major"""
    rows: int = Field(gt=0)
    cols: int = Field(gt=0)
    data: List[Tuple[float, float]]

    @model_validator(mode="after")
    def check_length(self):
        if len(self.data) != self.rows * self.cols:
            raise ValueError(f"data has {len(self.data)} entries, expected {self.rows * self.cols}")
        return self

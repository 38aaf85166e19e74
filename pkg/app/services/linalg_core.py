"""
Dense complex linear-algebra kernels.

All functions are pure; tolerances default to the values in ``config`` when
passed as ``None``. Norms written ||.||_2 are Frobenius norms, induced by the
real inner product Re tr(B* A).
"""

import logging
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from config import config
from app.exceptions import (
    DimensionError,
    EigensolverError,
    NotHermitianError,
    NotPositiveSemidefiniteError,
    SingularEquationError,
)
from app.models import ComplexMatrix, PolarParts, Spectrum

logger = logging.getLogger(__name__)


def _tol(value: Optional[float], default: float) -> float:
    return default if value is None else value


def as_matrix(t) -> ComplexMatrix:
    """Coerce to a finite square complex128 array"""
    a = np.asarray(t, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DimensionError("matrix has non-finite entries")
    return a


def adjoint(t: ComplexMatrix) -> ComplexMatrix:
    return t.conj().T


def frobenius_norm(t: ComplexMatrix) -> float:
    return float(np.linalg.norm(t))


def scale(t: ComplexMatrix) -> float:
    """Scale used by relative tolerances: max(1, ||t||_2)"""
    return max(1.0, frobenius_norm(t))


def frobenius_inner(a: ComplexMatrix, b: ComplexMatrix) -> float:
    """Re tr(b* a)"""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.real(np.vdot(b, a)))


def _eigh(p: ComplexMatrix):
    try:
        return np.linalg.eigh(p)
    except np.linalg.LinAlgError as e:
        raise EigensolverError(f"Hermitian eigensolver failed: {e}") from e


def _svd(t: ComplexMatrix):
    try:
        return np.linalg.svd(t)
    except np.linalg.LinAlgError as e:
        raise EigensolverError(f"SVD did not converge: {e}") from e


def hermitian_sqrt(
    p: ComplexMatrix,
    tol_herm: Optional[float] = None,
    tol_psd: Optional[float] = None,
) -> ComplexMatrix:
    """Positive square root of a positive semidefinite matrix, via unitary diagonalization"""
    p = as_matrix(p)
    tol_herm = _tol(tol_herm, config.TOL_HERM)
    tol_psd = _tol(tol_psd, config.TOL_PSD)
    s = scale(p)

    skew = frobenius_norm(p - adjoint(p))
    if skew > tol_herm * s:
        raise NotHermitianError(f"input is not Hermitian (||p - p*||_2 = {skew:.3e})")

    eigvals, eigvecs = _eigh(0.5 * (p + adjoint(p)))
    if eigvals.min() < -tol_psd * s:
        raise NotPositiveSemidefiniteError(f"eigenvalue {eigvals.min():.3e} below -tol_psd")

    # negatives within tolerance are rounding noise
    roots = np.sqrt(np.clip(eigvals, 0.0, None))
    root = (eigvecs * roots) @ adjoint(eigvecs)
    return 0.5 * (root + adjoint(root))


def polar_decompose(t: ComplexMatrix, tol_recon: Optional[float] = None) -> PolarParts:
    """
    T = U |T| with U a full unitary.

    For singular T the partial isometry is completed through the unitary factor
    W V* of the SVD T = W S V*; the zero matrix gets U = I.
    """
    t = as_matrix(t)
    r = t.shape[0]
    if not np.any(t):
        return PolarParts(unitary=np.eye(r, dtype=complex), modulus=np.zeros((r, r), dtype=complex))

    w, s, vh = _svd(t)
    unitary = w @ vh
    modulus = (adjoint(vh) * s) @ vh
    modulus = 0.5 * (modulus + adjoint(modulus))

    residual = frobenius_norm(unitary @ modulus - t)
    if residual > _tol(tol_recon, config.TOL_RECON) * (1.0 + frobenius_norm(t)):
        raise EigensolverError(f"polar factors do not reconstruct the input (residual {residual:.3e})")
    return PolarParts(unitary=unitary, modulus=modulus)


def sylvester_solve(
    a: ComplexMatrix,
    b: ComplexMatrix,
    y: ComplexMatrix,
    tol_gap: Optional[float] = None,
) -> ComplexMatrix:
    """Solve aX - Xb = y for disjoint spectra of a and b"""
    a, b = as_matrix(a), as_matrix(b)
    y = np.asarray(y, dtype=complex)
    if y.shape != (a.shape[0], b.shape[0]):
        raise DimensionError(f"right-hand side has shape {y.shape}, expected {(a.shape[0], b.shape[0])}")
    tol_gap = _tol(tol_gap, config.TOL_GAP)

    gap = np.min(np.abs(eigenvalues(a)[:, None] - eigenvalues(b)[None, :]))
    if gap < tol_gap * max(scale(a), scale(b)):
        raise SingularEquationError(f"spectral gap {gap:.3e} below tolerance")

    # scipy solves a X + X b' = q
    return scipy.linalg.solve_sylvester(a, -b, y)


def eigenvalues(t: ComplexMatrix) -> np.ndarray:
    try:
        return np.linalg.eigvals(t)
    except np.linalg.LinAlgError as e:
        raise EigensolverError(f"eigensolver did not converge: {e}") from e


def sort_eigenvalues(values) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    order = np.lexsort((values.imag, values.real))
    return values[order]


def spectrum(t: ComplexMatrix) -> Spectrum:
    t = as_matrix(t)
    return Spectrum(eigenvalues=sort_eigenvalues(eigenvalues(t)))


def spectrum_distance(a, b) -> float:
    """Largest eigenvalue displacement under the optimal pairing of two multisets"""
    a = np.asarray(a.eigenvalues if isinstance(a, Spectrum) else a, dtype=complex)
    b = np.asarray(b.eigenvalues if isinstance(b, Spectrum) else b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionError(f"spectra of different sizes: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def normality_residual(t: ComplexMatrix) -> float:
    """||t*t - tt*||_2 / max(1, ||t||_2^2)"""
    t = as_matrix(t)
    commutator = adjoint(t) @ t - t @ adjoint(t)
    return frobenius_norm(commutator) / max(1.0, frobenius_norm(t) ** 2)


def singular_values(t: ComplexMatrix) -> np.ndarray:
    try:
        return np.linalg.svd(t, compute_uv=False)
    except np.linalg.LinAlgError as e:
        raise EigensolverError(f"SVD did not converge: {e}") from e


def smallest_singular_value(t: ComplexMatrix) -> float:
    return float(singular_values(as_matrix(t)).min())


def numerical_rank(
    t: ComplexMatrix,
    tol_rank: Optional[float] = None,
    reference: Optional[float] = None,
) -> int:
    """Singular values above tol_rank * reference (default: the largest singular value)"""
    tol_rank = _tol(tol_rank, config.TOL_RANK)
    sv = singular_values(np.asarray(t, dtype=complex))
    if sv.size == 0:
        return 0
    threshold = tol_rank * (sv[0] if reference is None else reference)
    return int(np.sum(sv > threshold))


def is_unitary(u: ComplexMatrix, tol: Optional[float] = None) -> bool:
    u = as_matrix(u)
    tol = _tol(tol, config.TOL_UNITARY)
    return frobenius_norm(adjoint(u) @ u - np.eye(u.shape[0])) <= tol * u.shape[0]


def random_unitary(r: int, rng: np.random.Generator) -> ComplexMatrix:
    """Haar-distributed unitary: QR of a complex Gaussian with phase correction"""
    g = (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))) / np.sqrt(2.0)
    q, upper = np.linalg.qr(g)
    phases = np.diagonal(upper) / np.abs(np.diagonal(upper))
    return q * phases


def random_complex(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

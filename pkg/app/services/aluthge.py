"""
The Aluthge transform D(T) = |T|^(1/2) U |T|^(1/2), its iterates and limits.
"""

import logging
from typing import List, Optional

import numpy as np
import scipy.linalg

from config import config
from app.exceptions import NearSingularError, OrthogonalityError, UsageError
from app.models import ComplexMatrix, LimitReport, Multiplicities, SplitResult, Trajectory
from app.services.linalg_core import (
    _svd,
    _eigh,
    _tol,
    adjoint,
    as_matrix,
    eigenvalues,
    frobenius_norm,
    hermitian_sqrt,
    normality_residual,
    numerical_rank,
    polar_decompose,
    scale,
    smallest_singular_value,
)

logger = logging.getLogger(__name__)


def aluthge(t: ComplexMatrix) -> ComplexMatrix:
    """|T|^(1/2) U |T|^(1/2)"""
    t = as_matrix(t)
    parts = polar_decompose(t)
    root = hermitian_sqrt(parts.modulus)
    return root @ parts.unitary @ root


def aluthge_invertible(t: ComplexMatrix, tol_inv: Optional[float] = None) -> ComplexMatrix:
    """|T|^(1/2) T |T|^(-1/2), defined for invertible T only"""
    t = as_matrix(t)
    tol_inv = _tol(tol_inv, config.TOL_INV)
    sigma_min = smallest_singular_value(t)
    if sigma_min <= tol_inv * scale(t):
        raise NearSingularError(f"smallest singular value {sigma_min:.3e} below tolerance")

    eigvals, eigvecs = _eigh(adjoint(t) @ t)
    quarter = np.clip(eigvals, 0.0, None) ** 0.25
    root = (eigvecs * quarter) @ adjoint(eigvecs)
    inverse_root = (eigvecs / quarter) @ adjoint(eigvecs)
    return root @ t @ inverse_root


def iterate(t: ComplexMatrix, n: int) -> Trajectory:
    """D^0(T) .. D^n(T) with step distances and normality residuals"""
    if n < 0:
        raise UsageError(f"number of iterations must be non-negative, got {n}")
    current = as_matrix(t)
    iterates: List[ComplexMatrix] = [current]
    distances: List[float] = []
    normality: List[float] = []

    for k in range(n + 1):
        following = aluthge(current)
        distances.append(frobenius_norm(following - current))
        normality.append(normality_residual(current))
        if k < n:
            iterates.append(following)
        current = following

    return Trajectory(start=iterates[0], iterates=iterates, distances=distances, normality=normality)


def limit(
    t: ComplexMatrix,
    tol_conv: Optional[float] = None,
    tol_norm: Optional[float] = None,
    max_iter: Optional[int] = None,
    keep_trajectory: bool = False,
    reduce_singular: bool = False,
    identify_single_eigenvalue: bool = False,
    tol_cluster: Optional[float] = None,
) -> LimitReport:
    """
    Iterate until the step and the normality residual both fall below their
    tolerances. ``converged`` is True only when that stopping rule was met.

    With ``identify_single_eigenvalue``, a run that hits the cap on a matrix
    whose eigenvalues all agree within ``tol_cluster`` (default TOL_EIG_MATCH)
    relative to max(1, ||t||_2) reports lam*I as its limit under
    ``method="single_eigenvalue"``, still with ``converged=False``.
    """
    t = as_matrix(t)
    tol_conv = _tol(tol_conv, config.TOL_CONV)
    tol_norm = _tol(tol_norm, config.TOL_NORM)
    max_iter = config.MAX_ITER if max_iter is None else max_iter
    if max_iter < 1:
        raise UsageError(f"max_iter must be at least 1, got {max_iter}")

    if reduce_singular:
        return _limit_reduced(t, tol_conv, tol_norm, max_iter, keep_trajectory, identify_single_eigenvalue, tol_cluster)

    current = t
    iterates: List[ComplexMatrix] = [t]
    distances: List[float] = []
    normality: List[float] = []
    step = residual = float("nan")

    for k in range(max_iter + 1):
        following = aluthge(current)
        step = frobenius_norm(following - current)
        residual = normality_residual(current)
        distances.append(step)
        normality.append(residual)

        if step < tol_conv and residual < tol_norm:
            logger.debug(f"Converged after {k} iterations (step {step:.3e}, normality {residual:.3e})")
            return LimitReport(
                limit=current,
                iterations_used=k,
                converged=True,
                final_step=step,
                final_normality=residual,
                trajectory=_trajectory(iterates, distances, normality) if keep_trajectory else None,
            )
        if k == max_iter:
            break
        if k and k % 1000 == 0:
            logger.debug(f"Iteration {k}: step {step:.3e}, normality {residual:.3e}")
        current = following
        if keep_trajectory:
            iterates.append(current)

    logger.warning(f"No convergence within {max_iter} iterations (step {step:.3e}, normality {residual:.3e})")
    method = "iteration"
    if identify_single_eigenvalue:
        identified = _single_eigenvalue_limit(t, tol_cluster)
        if identified is not None:
            logger.info("Spectrum is a single point; reporting lambda*I as the limit")
            current, method = identified, "single_eigenvalue"

    return LimitReport(
        limit=current,
        iterations_used=max_iter,
        converged=False,
        final_step=step,
        final_normality=residual,
        method=method,
        trajectory=_trajectory(iterates, distances, normality) if keep_trajectory else None,
    )


def _trajectory(iterates, distances, normality) -> Trajectory:
    return Trajectory(start=iterates[0], iterates=list(iterates), distances=list(distances), normality=list(normality))


def _single_eigenvalue_limit(t: ComplexMatrix, tol_cluster: Optional[float]) -> Optional[ComplexMatrix]:
    # Every limit point is normal with spectrum {lam,...,lam}, hence equal to lam*I
    tol_cluster = _tol(tol_cluster, config.TOL_EIG_MATCH)
    r = t.shape[0]
    lam = np.trace(t) / r
    spread = float(np.max(np.abs(eigenvalues(t) - lam)))
    if spread > tol_cluster * scale(t):
        return None
    return lam * np.eye(r, dtype=complex)


def _limit_reduced(t, tol_conv, tol_norm, max_iter, keep_trajectory, identify_single_eigenvalue, tol_cluster) -> LimitReport:
    # D(t) = W* (S (+) 0) W and D commutes with that embedding, so
    # D^(k+1)(t) = W* (D^k(S) (+) 0) W with the same steps and residuals
    r = t.shape[0]
    split = split_singular(t)
    w = split.unitary

    def embed(block: ComplexMatrix) -> ComplexMatrix:
        padded = scipy.linalg.block_diag(block, np.zeros((split.zero_dim, split.zero_dim)))
        return adjoint(w) @ padded @ w

    first_step = frobenius_norm(embed(split.invertible_block) - t)

    if split.zero_dim == r:
        zero = np.zeros((r, r), dtype=complex)
        trajectory = None
        if keep_trajectory:
            trajectory = _trajectory([t, zero], [first_step, 0.0], [normality_residual(t), 0.0])
        return LimitReport(limit=zero, iterations_used=1, converged=True, final_step=0.0,
                           final_normality=0.0, method="reduced", trajectory=trajectory)

    block = limit(
        split.invertible_block,
        tol_conv=tol_conv,
        tol_norm=tol_norm,
        max_iter=max_iter,
        keep_trajectory=keep_trajectory,
        identify_single_eigenvalue=identify_single_eigenvalue,
        tol_cluster=tol_cluster,
    )
    assembled = embed(block.limit)
    logger.debug(f"Reduced to an invertible block of size {r - split.zero_dim}")

    trajectory = None
    if block.trajectory is not None:
        trajectory = _trajectory(
            [t] + [embed(x) for x in block.trajectory.iterates],
            [first_step] + block.trajectory.distances,
            [normality_residual(t)] + block.trajectory.normality,
        )
    return LimitReport(
        limit=assembled,
        iterations_used=block.iterations_used + 1,
        converged=block.converged,
        final_step=block.final_step,
        final_normality=normality_residual(assembled),
        method="reduced",
        trajectory=trajectory,
    )


def split_singular(
    t: ComplexMatrix,
    tol_inv: Optional[float] = None,
    tol_ortho: Optional[float] = None,
    tol_rank: Optional[float] = None,
) -> SplitResult:
    """
    Unitary W and invertible S with W D(t) W* = S (+) 0.

    Requires range(D(t)) orthogonal to ker(D(t)), which holds when
    m(t, 0) = m_0(t, 0), e.g. for diagonalizable t.
    """
    tol_inv = _tol(tol_inv, config.TOL_INV)
    tol_ortho = _tol(tol_ortho, config.TOL_ORTHO)
    tol_rank = _tol(tol_rank, config.TOL_RANK)
    a = aluthge(as_matrix(t))
    r = a.shape[0]

    w, s, vh = _svd(a)
    rank = int(np.sum(s > tol_rank * max(s[0], 1.0)))
    if rank == r:
        return SplitResult(unitary=np.eye(r, dtype=complex), invertible_block=a, zero_dim=0)
    if rank == 0:
        return SplitResult(unitary=np.eye(r, dtype=complex), invertible_block=np.zeros((0, 0), dtype=complex), zero_dim=r)

    range_basis = w[:, :rank]
    kernel_basis = adjoint(vh[rank:])
    smallest_angle = float(np.min(scipy.linalg.subspace_angles(range_basis, kernel_basis)))
    if np.cos(smallest_angle) > tol_ortho:
        raise OrthogonalityError(
            f"range and kernel of the transform are not orthogonal (cos = {np.cos(smallest_angle):.3e})"
        )

    # rows of vh: an orthonormal basis of ker^perp followed by one of ker
    block = vh[:rank] @ a @ adjoint(vh[:rank])
    sigma_min = smallest_singular_value(block)
    if sigma_min <= tol_inv * scale(a):
        raise NearSingularError(f"invertible block has smallest singular value {sigma_min:.3e}")
    return SplitResult(unitary=vh, invertible_block=block, zero_dim=r - rank)


def multiplicities(
    t: ComplexMatrix,
    mu: complex,
    tol_eig: Optional[float] = None,
    tol_rank: Optional[float] = None,
) -> Multiplicities:
    """(algebraic, geometric) multiplicity of mu; (0, 0) when mu is not an eigenvalue"""
    t = as_matrix(t)
    tol_eig = _tol(tol_eig, config.TOL_EIG_MATCH)
    r = t.shape[0]

    algebraic = int(np.sum(np.abs(eigenvalues(t) - mu) <= tol_eig * scale(t)))
    if algebraic == 0:
        return Multiplicities(0, 0)
    shifted = t - mu * np.eye(r)
    geometric = r - numerical_rank(shifted, tol_rank, reference=scale(t))
    return Multiplicities(algebraic, geometric)

"""
Tangent spaces of the similarity and unitary orbits of an invertible diagonal
D, the Hadamard kit describing the derivative of the Aluthge transform at D,
and the stable projection built from it.

Tangent vectors are real-linear objects: operators act on stacked (Re, Im)
coordinates over the ordered pairs (i, j) with d_i != d_j, see
``TangentDecomposition.coords``.
"""

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg

from config import config
from app.exceptions import (
    DimensionError,
    NearSingularError,
    NotUnitaryError,
    TangentSpaceError,
    UsageError,
)
from app.models import ComplexMatrix, DerivativeKit, DiffeoCheck, OrbitContext, TangentDecomposition
from app.services.aluthge import aluthge
from app.services.linalg_core import _tol, adjoint, as_matrix, is_unitary, scale, sylvester_solve

logger = logging.getLogger(__name__)

# Entries of a tangent vector at equal pairs must vanish up to this relative size
TANGENT_TOL = 1e-12
# Band for "d_i conj(d_j) is a negative real"
OPPOSITE_PHASE_TOL = 1e-8
# Singular values at or below this count as zero in the numeric diffeomorphism test
DIFFEO_SV_TOL = 1e-8


def _diagonal(d) -> np.ndarray:
    d = np.asarray(d, dtype=complex)
    if d.ndim == 2:
        if d.shape[0] != d.shape[1] or np.any(d - np.diag(np.diagonal(d))):
            raise DimensionError("expected a diagonal matrix or a vector of diagonal entries")
        d = np.diagonal(d).copy()
    if d.ndim != 1 or d.size == 0:
        raise DimensionError(f"expected a non-empty vector of diagonal entries, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise DimensionError("diagonal has non-finite entries")
    return d


def _cluster(d: np.ndarray, cluster_tol: float) -> np.ndarray:
    """Snap entries within cluster_tol * max|d_i| of each other onto their group mean"""
    radius = cluster_tol * float(np.max(np.abs(d)))
    labels = -np.ones(len(d), dtype=int)
    for i in range(len(d)):
        if labels[i] >= 0:
            continue
        members = (labels < 0) & (np.abs(d - d[i]) <= radius)
        labels[members] = i
    snapped = d.copy()
    for label in np.unique(labels):
        group = labels == label
        snapped[group] = d[group].mean()
    return snapped


def _h1_moduli(moduli: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """|1 + e^{i(theta_j - theta_i)}| |d_i|^(1/2) |d_j|^(1/2) / (|d_i| + |d_j|)"""
    turn = np.abs(1 + np.exp(1j * (phases[None, :] - phases[:, None])))
    roots = np.sqrt(moduli)
    return turn * np.outer(roots, roots) / (moduli[:, None] + moduli[None, :])


def orbit_context(d, cluster_tol: Optional[float] = None) -> OrbitContext:
    """
    Diagonal data of an invertible D.

    Equality of entries is exact unless ``cluster_tol`` is given, in which case
    entries closer than cluster_tol * max|d_i| are merged first (for computed
    spectra).
    """
    d = _diagonal(d)
    if np.any(d == 0):
        raise NearSingularError("diagonal has a zero entry; D must be invertible")
    if cluster_tol is not None:
        d = _cluster(d, cluster_tol)

    moduli = np.abs(d)
    phases = np.mod(np.angle(d), 2 * np.pi)
    equal = d[:, None] == d[None, :]
    h1 = _h1_moduli(moduli, phases)
    k_d = float(np.max(h1[~equal])) if np.any(~equal) else 0.0
    return OrbitContext(d=d, moduli=moduli, phases=phases, equal=equal, k_d=k_d)


def commutator_with_diagonal(a: ComplexMatrix, d) -> ComplexMatrix:
    """[A, D] = AD - DA, entrywise A_ij (d_j - d_i)"""
    d = _diagonal(d)
    a = np.asarray(a, dtype=complex)
    return a * (d[None, :] - d[:, None])


def tangent_basis(ctx: OrbitContext) -> TangentDecomposition:
    """Real bases of T_D O(D) and of T_D O_U(D)"""
    r = ctx.r
    pairs = ctx.pairs

    def unit(i, j, value=1.0):
        e = np.zeros((r, r), dtype=complex)
        e[i, j] = value
        return e

    tangent = [unit(i, j) for i, j in pairs] + [unit(i, j, 1j) for i, j in pairs]

    unitary_tangent = []
    for i, j in pairs:
        if i < j:
            generators = (unit(i, j) - unit(j, i), 1j * (unit(i, j) + unit(j, i)))
            unitary_tangent.extend(commutator_with_diagonal(g, ctx.d) for g in generators)

    return TangentDecomposition(r=r, pairs=pairs, tangent_basis=tangent, unitary_tangent_basis=unitary_tangent)


def build_kit(ctx: OrbitContext) -> DerivativeKit:
    """Hadamard matrices describing the derivative of the transform at D"""
    d = ctx.d
    a = ctx.moduli
    s = np.sqrt(a)
    r = ctx.r
    index = np.arange(r)

    diff = d[None, :] - d[:, None]
    direction = np.sign(index[None, :] - index[:, None])
    K = np.where(ctx.equal, 0.0, np.abs(diff) * direction).astype(complex)
    J = np.ones((r, r), dtype=complex)
    np.divide(diff, K, out=J, where=~ctx.equal)

    L = (s[:, None] / s[None, :]).astype(complex)
    N = np.tile(1.0 / s, (r, 1)).astype(complex)
    M = (1.0 / ((a[:, None] + a[None, :]) * (s[:, None] + s[None, :]))).astype(complex)
    R = 2 * np.outer(d.conj(), d)
    T_plus = (a[:, None] ** 2 + a[None, :] ** 2).astype(complex)
    T_minus = (a[None, :] ** 2 - a[:, None] ** 2).astype(complex)

    H = M * N * (R - T_plus) + L
    H1 = 0.5 * (H + adjoint(H))
    H2 = 0.5 * (H - adjoint(H))
    return DerivativeKit(J=J, K=K, L=L, M=M, N=N, R=R, T_plus=T_plus, T_minus=T_minus, H=H, H1=H1, H2=H2)


def _check_tangent(ctx: OrbitContext, x: ComplexMatrix) -> ComplexMatrix:
    x = np.asarray(x, dtype=complex)
    if x.shape != (ctx.r, ctx.r):
        raise DimensionError(f"tangent vector has shape {x.shape}, expected {(ctx.r, ctx.r)}")
    leak = float(np.max(np.abs(x[ctx.equal]))) if ctx.r else 0.0
    if leak > TANGENT_TOL * scale(x):
        raise TangentSpaceError(f"matrix is not tangent to the orbit (entry {leak:.3e} at an equal pair)")
    return np.where(ctx.equal, 0, x)


def projection_qd(ctx: OrbitContext, kit: DerivativeKit, x: ComplexMatrix) -> ComplexMatrix:
    """Q_D(x) = J o P_Im(conj(J) o x), the orthogonal projection onto the complement of T_D O_U(D)"""
    x = _check_tangent(ctx, x)
    y = kit.J.conj() * x
    return kit.J * (0.5 * (y - adjoint(y)))


def derivative_at_d(ctx: OrbitContext, kit: DerivativeKit, x: ComplexMatrix) -> ComplexMatrix:
    """TD_D(x) = H o Q_D(x) + (x - Q_D(x))"""
    x = _check_tangent(ctx, x)
    q = projection_qd(ctx, kit, x)
    return kit.H * q + (x - q)


def _check_unitary(u: ComplexMatrix, r: int) -> ComplexMatrix:
    u = as_matrix(u)
    if u.shape[0] != r:
        raise DimensionError(f"unitary has size {u.shape[0]}, expected {r}")
    if not is_unitary(u):
        raise NotUnitaryError("conjugating matrix is not unitary within tolerance")
    return u


def derivative_at_n(ctx: OrbitContext, kit: DerivativeKit, u: ComplexMatrix, x: ComplexMatrix) -> ComplexMatrix:
    """TD_N(x) at N = U D U*, obtained as Ad_U TD_D Ad_U^-1"""
    u = _check_unitary(u, ctx.r)
    return u @ derivative_at_d(ctx, kit, adjoint(u) @ x @ u) @ adjoint(u)


def _base_point(base) -> ComplexMatrix:
    base = np.asarray(base, dtype=complex)
    if base.ndim == 1:
        return np.diag(_diagonal(base))
    return as_matrix(base)


def finite_difference_derivative(base, a: ComplexMatrix, h: Optional[float] = None) -> ComplexMatrix:
    """
    Central difference of t -> D(e^{tA} N e^{-tA}) at t = 0, an O(h^2)
    approximation of TD_N([A, N]). ``base`` is a diagonal vector or a matrix N.
    """
    h = _tol(h, config.FD_STEP)
    if not 1e-7 <= h <= 1e-3:
        raise UsageError(f"finite-difference step must lie in [1e-7, 1e-3], got {h}")
    n = _base_point(base)
    a = np.asarray(a, dtype=complex)
    if a.shape != n.shape:
        raise DimensionError(f"direction has shape {a.shape}, expected {n.shape}")
    if not np.any(a):
        return np.zeros_like(n)

    forward = scipy.linalg.expm(h * a)
    backward = scipy.linalg.expm(-h * a)
    plus = aluthge(forward @ n @ backward)
    minus = aluthge(backward @ n @ forward)
    return (plus - minus) / (2 * h)


def richardson_derivative(base, a: ComplexMatrix, h: Optional[float] = None) -> Tuple[ComplexMatrix, float]:
    """Richardson extrapolation over steps h and h/2; returns (estimate, error estimate)"""
    h = _tol(h, config.FD_STEP)
    coarse = finite_difference_derivative(base, a, h)
    fine = finite_difference_derivative(base, a, h / 2)
    estimate = (4 * fine - coarse) / 3
    return estimate, float(np.linalg.norm(estimate - fine))


def gamma_dot(d, a: ComplexMatrix) -> ComplexMatrix:
    """
    Derivative at 0 of gamma(t) = T(t)* T(t), T(t) = e^{tA} D e^{-tA}:
    X* D + D* X with X = [A, D]
    """
    d = _diagonal(d)
    x = commutator_with_diagonal(a, d)
    dm = np.diag(d)
    return adjoint(x) @ dm + adjoint(dm) @ x


def quarter_root_derivative(d, g: ComplexMatrix) -> ComplexMatrix:
    """
    Derivative of P -> P^(1/4) at P = |D|^2 in direction g, by chaining two
    Sylvester equations: S X + X S = g for the square root, then once more.
    """
    d = _diagonal(d)
    root = np.diag(np.abs(d)).astype(complex)
    quarter = np.diag(np.sqrt(np.abs(d))).astype(complex)
    half_dot = sylvester_solve(root, -root, g)
    return sylvester_solve(quarter, -quarter, half_dot)


def chain_rule_derivative(d, a: ComplexMatrix) -> ComplexMatrix:
    """
    TD_D([A, D]) from D(T) = |T|^(1/2) T |T|^(-1/2) and the quarter-root
    derivative; independent of the Hadamard kit
    """
    d = _diagonal(d)
    x = commutator_with_diagonal(a, d)
    f = quarter_root_derivative(d, gamma_dot(d, a))
    dm = np.diag(d)
    s = np.diag(np.sqrt(np.abs(d)))
    s_inv = np.diag(1.0 / np.sqrt(np.abs(d)))
    return f @ dm @ s_inv + s @ x @ s_inv - s @ dm @ s_inv @ f @ s_inv


def _real_operator(decomp: TangentDecomposition, fn: Callable[[ComplexMatrix], ComplexMatrix]) -> np.ndarray:
    """Matrix of a real-linear map of the tangent space in stacked coordinates"""
    dim = decomp.dim
    op = np.zeros((dim, dim))
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        op[:, k] = decomp.coords(fn(decomp.from_coords(e)))
    return op


def hadamard_multiplier_norm(ctx: OrbitContext, a: ComplexMatrix) -> float:
    """Operator norm of x -> a o x on T_D O(D)"""
    a = np.asarray(a, dtype=complex)
    decomp = tangent_basis(ctx)
    if decomp.dim == 0:
        return 0.0
    op = _real_operator(decomp, lambda x: a * x)
    return float(np.linalg.norm(op, 2))


def block_operators(
    ctx: OrbitContext,
    kit: DerivativeKit,
    decomp: Optional[TangentDecomposition] = None,
) -> TangentDecomposition:
    """
    Q_D, TD_D and the blocks A1 = Q TD Q, A2 = (I - Q) TD Q in the layout
    (range Q_D, ker Q_D), where TD_D = [[A1, 0], [A2, I]]
    """
    decomp = decomp or tangent_basis(ctx)
    dim = decomp.dim
    if dim == 0:
        empty = np.zeros((0, 0))
        return decomp.model_copy(update=dict(
            q_op=empty, derivative_op=empty, range_basis=empty, kernel_basis=empty, a1_op=empty, a2_op=empty,
        ))

    q_op = _real_operator(decomp, lambda x: projection_qd(ctx, kit, x))
    derivative_op = _real_operator(decomp, lambda x: derivative_at_d(ctx, kit, x))
    range_basis = scipy.linalg.orth(q_op, rcond=config.TOL_RANK)
    kernel_basis = scipy.linalg.null_space(q_op, rcond=config.TOL_RANK)
    if range_basis.shape[1] + kernel_basis.shape[1] != dim:
        raise TangentSpaceError("range and kernel of Q_D do not split the tangent space")

    a1_op = range_basis.T @ derivative_op @ range_basis
    a2_op = kernel_basis.T @ derivative_op @ range_basis
    logger.debug(f"Tangent dim {dim}, rank Q_D {range_basis.shape[1]}, ||A1|| {np.linalg.norm(a1_op, 2):.6g}")
    return decomp.model_copy(update=dict(
        q_op=q_op,
        derivative_op=derivative_op,
        range_basis=range_basis,
        kernel_basis=kernel_basis,
        a1_op=a1_op,
        a2_op=a2_op,
    ))


def stable_projection(
    ctx: OrbitContext,
    kit: DerivativeKit,
    decomp: Optional[TangentDecomposition] = None,
    tol_inv: Optional[float] = None,
) -> TangentDecomposition:
    """
    Projection P onto the stable subspace E^s parallel to T_D O_U(D):
    P = [[I, 0], [G, 0]] with G = -A2 (I - A1)^-1
    """
    tol_inv = _tol(tol_inv, config.TOL_INV)
    if decomp is None or decomp.a1_op is None:
        decomp = block_operators(ctx, kit, decomp)
    rank = decomp.a1_op.shape[0]
    if rank == 0:
        return decomp.model_copy(update=dict(p_op=np.zeros((decomp.dim, decomp.dim)), stable_basis=[]))

    shifted = np.eye(rank) - decomp.a1_op
    sigma_min = float(np.linalg.svd(shifted, compute_uv=False).min())
    if sigma_min <= tol_inv:
        raise NearSingularError(f"I - A1 is numerically singular (smallest singular value {sigma_min:.3e})")

    graph = -np.linalg.solve(shifted.T, decomp.a2_op.T).T
    frame = np.hstack([decomp.range_basis, decomp.kernel_basis])
    kernel_rank = decomp.kernel_basis.shape[1]
    block = np.block([
        [np.eye(rank), np.zeros((rank, kernel_rank))],
        [graph, np.zeros((kernel_rank, kernel_rank))],
    ])
    p_op = frame @ block @ frame.T
    stable_coords = decomp.range_basis + decomp.kernel_basis @ graph
    stable_basis = [decomp.from_coords(column) for column in stable_coords.T]
    return decomp.model_copy(update=dict(p_op=p_op, stable_basis=stable_basis))


def decompose(ctx: OrbitContext, kit: Optional[DerivativeKit] = None) -> TangentDecomposition:
    return stable_projection(ctx, kit or build_kit(ctx))


def conjugate_to_n(decomp: TangentDecomposition, u: ComplexMatrix) -> TangentDecomposition:
    """
    Transport to N = U D U*. Coordinate operators are unchanged since Ad_U is
    an isometry; bases are conjugated and the frame records U.
    """
    u = _check_unitary(u, decomp.r)

    def move(basis: Optional[List[ComplexMatrix]]):
        if basis is None:
            return None
        return [u @ x @ adjoint(u) for x in basis]

    frame = u if decomp.frame is None else u @ decomp.frame
    return decomp.model_copy(update=dict(
        frame=frame,
        tangent_basis=move(decomp.tangent_basis),
        unitary_tangent_basis=move(decomp.unitary_tangent_basis),
        stable_basis=move(decomp.stable_basis),
    ))


def opposite_phase_pairs(ctx: OrbitContext) -> List[Tuple[int, int]]:
    """Unequal pairs with d_i conj(d_j) a negative real"""
    turn = np.exp(1j * (ctx.phases[None, :] - ctx.phases[:, None]))
    return [(i, j) for i, j in ctx.pairs if abs(1 + turn[i, j]) <= OPPOSITE_PHASE_TOL]


def local_diffeo_check(
    ctx: OrbitContext,
    kit: Optional[DerivativeKit] = None,
    decomp: Optional[TangentDecomposition] = None,
) -> DiffeoCheck:
    """TD_D is invertible on T_D O(D) exactly when no two entries have opposite phases"""
    local_diffeo = not opposite_phase_pairs(ctx)
    if decomp is None or decomp.derivative_op is None:
        decomp = block_operators(ctx, kit or build_kit(ctx), decomp)
    if decomp.dim == 0:
        return DiffeoCheck(local_diffeo=local_diffeo, smallest_singular_value=None, numeric_agrees=local_diffeo)

    sigma_min = float(np.linalg.svd(decomp.derivative_op, compute_uv=False).min())
    agrees = (sigma_min > DIFFEO_SV_TOL) == local_diffeo
    if not agrees:
        logger.warning(f"Phase criterion says local_diffeo={local_diffeo} but smallest singular value is {sigma_min:.3e}")
    return DiffeoCheck(local_diffeo=local_diffeo, smallest_singular_value=sigma_min, numeric_agrees=agrees)


def derivative_error(ctx: OrbitContext, kit: DerivativeKit, a: ComplexMatrix, h: Optional[float] = None) -> float:
    """Gap between TD_D([A, D]) and its central difference, relative to max(||TD_D([A, D])||, ||D||)"""
    analytic = derivative_at_d(ctx, kit, commutator_with_diagonal(a, ctx.d))
    numeric = finite_difference_derivative(ctx.d, a, h)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), np.linalg.norm(ctx.d)))

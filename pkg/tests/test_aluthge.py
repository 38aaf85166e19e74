import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from config import config
from app.exceptions import NearSingularError, OrthogonalityError, UsageError
from app.services import aluthge as aluthge_module
from app.services.aluthge import (
    aluthge,
    aluthge_invertible,
    iterate,
    limit,
    multiplicities,
    split_singular,
)
from app.services.experiments import random_diagonalizable
from app.services.linalg_core import (
    adjoint,
    normality_residual,
    numerical_rank,
    random_unitary,
    scale,
    spectrum,
    spectrum_distance,
)
from app.services.orbit_geometry import orbit_context
from tests.helpers import JORDAN_2, SWAP_2, UPPER_12, random_matrix, random_unitary_from, seeds, similar_to, sizes


class TestTransformExamples:
    def test_normal_matrices_are_fixed(self):
        for t in (np.diag([1.0, 2j, -3.0]), np.eye(2), np.array([[0, 1], [1, 0]])):
            np.testing.assert_allclose(aluthge(t), t, atol=1e-12)

    def test_zero(self):
        np.testing.assert_array_equal(aluthge(np.zeros((3, 3))), np.zeros((3, 3)))

    def test_nilpotent_goes_to_zero(self):
        np.testing.assert_allclose(aluthge(JORDAN_2), np.zeros((2, 2)), atol=1e-14)

    def test_swap(self):
        expected = np.sqrt(2) * np.array([[0, 1], [1, 0]])
        np.testing.assert_allclose(aluthge(SWAP_2), expected, atol=1e-12)

    def test_invertible_formula_agrees(self):
        t = np.array([[1, 1], [0, 2]], dtype=complex)
        np.testing.assert_allclose(aluthge_invertible(t), aluthge(t), atol=1e-12)

    def test_invertible_formula_rejects_singular(self):
        with pytest.raises(NearSingularError):
            aluthge_invertible(JORDAN_2)


class TestTransformProperties:
    @given(seed=seeds, r=sizes, c=st.complex_numbers(min_magnitude=0.1, max_magnitude=10))
    def test_homogeneous(self, seed, r, c):
        t = random_matrix(seed, r)
        tol = 1e-9 * abs(c) * max(1, np.linalg.norm(t))
        assert np.linalg.norm(aluthge(c * t) - c * aluthge(t)) <= tol

    @given(seed=seeds, r=sizes)
    def test_unitary_equivariance(self, seed, r):
        t = random_matrix(seed, r)
        u = random_unitary_from(seed + 7, r)
        lhs = aluthge(u @ t @ adjoint(u))
        rhs = u @ aluthge(t) @ adjoint(u)
        assert np.linalg.norm(lhs - rhs) <= 1e-9 * max(1, np.linalg.norm(t))

    @given(seed=seeds, r=st.integers(1, 3), s=st.integers(1, 3))
    def test_direct_sums(self, seed, r, s):
        a = random_matrix(seed, r)
        b = random_matrix(seed + 1, s)
        lhs = aluthge(scipy.linalg.block_diag(a, b))
        rhs = scipy.linalg.block_diag(aluthge(a), aluthge(b))
        assert np.linalg.norm(lhs - rhs) <= 1e-9 * max(1, np.linalg.norm(a) + np.linalg.norm(b))

    @given(seed=seeds, r=sizes)
    def test_norm_does_not_grow(self, seed, r):
        t = random_matrix(seed, r)
        assert np.linalg.norm(aluthge(t)) <= np.linalg.norm(t) + 1e-12 * max(1, np.linalg.norm(t))

    @given(seed=seeds, r=sizes)
    def test_spectrum_is_preserved(self, seed, r):
        t = random_matrix(seed, r)
        assert spectrum_distance(spectrum(t), spectrum(aluthge(t))) <= 1e-8 * max(1, np.linalg.norm(t))


class TestIterate:
    def test_normal_start_is_constant(self):
        d = np.diag([1.0, 2j])
        trajectory = iterate(d, 3)
        assert len(trajectory.iterates) == 4
        for x in trajectory.iterates:
            np.testing.assert_allclose(x, d, atol=1e-12)

    def test_nilpotent(self):
        trajectory = iterate(JORDAN_2, 2)
        np.testing.assert_array_equal(trajectory.iterates[0], JORDAN_2)
        np.testing.assert_allclose(trajectory.iterates[1], 0, atol=1e-14)
        np.testing.assert_allclose(trajectory.iterates[2], 0, atol=1e-14)

    def test_zero_steps(self):
        trajectory = iterate(UPPER_12, 0)
        assert trajectory.steps == 0
        assert len(trajectory.distances) == 1

    def test_negative_steps(self):
        with pytest.raises(UsageError):
            iterate(UPPER_12, -1)

    def test_steps_contract_at_the_diagonal_rate(self):
        trajectory = iterate(UPPER_12, 80)
        steps = trajectory.distances
        ratios = [b / a for a, b in zip(steps, steps[1:]) if b > 1e-12]
        late = np.exp(np.mean(np.log(ratios[-5:])))
        assert late <= 2 * np.sqrt(2) / 3 + 0.02


class TestLimit:
    def test_upper_triangular(self):
        report = limit(UPPER_12, keep_trajectory=True)
        assert report.converged
        assert report.method == "iteration"
        assert normality_residual(report.limit) < 1e-9
        np.testing.assert_allclose(spectrum(report.limit).eigenvalues, [1, 2], atol=1e-8)
        assert len(report.trajectory.iterates) == report.iterations_used + 1
        assert len(report.trajectory.distances) == report.iterations_used + 1

    def test_normal_start_needs_no_iterations(self):
        report = limit(np.diag([1.0, -2.0, 3j]))
        assert report.converged
        assert report.iterations_used == 0

    def test_nilpotent_converges_in_one_step(self):
        report = limit(JORDAN_2)
        assert report.converged
        assert report.iterations_used == 1
        np.testing.assert_allclose(report.limit, 0, atol=1e-14)

    @pytest.mark.parametrize("lam", [1, 1j, -2])
    def test_jordan_block_limit_is_scalar(self, lam):
        t = np.array([[lam, 1], [0, lam]], dtype=complex)
        report = limit(t, max_iter=300, identify_single_eigenvalue=True)
        assert not report.converged
        assert report.method == "single_eigenvalue"
        np.testing.assert_allclose(report.limit, lam * np.eye(2), atol=1e-7)

    @pytest.mark.parametrize("t", [[[2, 50], [0, 2]], [[1, 1], [0, 1]]])
    def test_jordan_block_at_the_cap_is_not_converged(self, t):
        report = limit(np.array(t), max_iter=1)
        assert not report.converged
        assert report.method == "iteration"
        assert report.final_step >= config.TOL_CONV

    def test_close_eigenvalues_are_not_merged(self):
        instance = random_diagonalizable(2, [1, 1 + 5e-6], cond_bound=50, seed=3)
        report = limit(instance.matrix, max_iter=2000, identify_single_eigenvalue=True)
        assert not report.converged
        assert report.method == "iteration"
        assert spectrum_distance(spectrum(report.limit), instance.diagonal) <= 1e-9

    def test_cap_reports_non_convergence(self):
        report = limit(np.array([[1, 5], [0, 2]]), max_iter=1)
        assert not report.converged
        assert report.iterations_used == 1

    def test_cap_must_be_positive(self):
        with pytest.raises(UsageError):
            limit(UPPER_12, max_iter=0)

    def test_random_two_by_two_instances_converge(self):
        for seed in range(50):
            t = random_matrix(seed, 2)
            if seed % 10 == 0:
                lam = t[0, 0]
                report = limit(np.array([[lam, t[0, 1]], [0, lam]]), max_iter=300, identify_single_eigenvalue=True)
                assert report.method == "single_eigenvalue", seed
                np.testing.assert_allclose(report.limit, lam * np.eye(2), atol=1e-7)
                continue
            report = limit(t)
            assert report.converged, seed
            assert spectrum_distance(spectrum(report.limit), spectrum(t)) <= 1e-6 * max(1, np.linalg.norm(t))

    def test_reduced_route_agrees(self):
        t = similar_to([1, 2, 0], seed=3)
        direct = limit(t)
        reduced = limit(t, reduce_singular=True)
        assert direct.converged and reduced.converged
        assert reduced.method == "reduced"
        assert np.linalg.norm(direct.limit - reduced.limit) <= 1e-7

    def test_reduced_route_keeps_the_full_trajectory(self):
        t = similar_to([1, 2, 0], seed=3)
        report = limit(t, reduce_singular=True, keep_trajectory=True)
        trajectory = report.trajectory
        assert len(trajectory.iterates) == report.iterations_used + 1
        assert len(trajectory.distances) == len(trajectory.iterates)
        np.testing.assert_array_equal(trajectory.start, t)
        direct = iterate(t, 4)
        for k in range(5):
            assert trajectory.iterates[k].shape == (3, 3)
            np.testing.assert_allclose(trajectory.iterates[k], direct.iterates[k], atol=1e-9)
            assert trajectory.distances[k] == pytest.approx(direct.distances[k], abs=1e-9)
            assert trajectory.normality[k] == pytest.approx(direct.normality[k], abs=1e-9)
        np.testing.assert_allclose(trajectory.iterates[-1], report.limit, atol=1e-12)

    def test_reduced_route_on_nilpotent(self):
        report = limit(JORDAN_2, reduce_singular=True, keep_trajectory=True)
        assert report.converged
        np.testing.assert_allclose(report.limit, 0, atol=1e-12)
        assert len(report.trajectory.iterates) == 2
        assert report.trajectory.distances == [pytest.approx(1.0), 0.0]
        assert report.trajectory.normality[0] == pytest.approx(np.sqrt(2))


class TestSplitSingular:
    def test_invertible_is_left_alone(self):
        split = split_singular(UPPER_12)
        assert split.zero_dim == 0
        np.testing.assert_allclose(split.invertible_block, aluthge(UPPER_12), atol=1e-12)

    def test_diagonalizable_singular(self):
        t = similar_to([1, 2, 0], seed=11)
        split = split_singular(t)
        assert split.zero_dim == 1
        w = split.unitary
        transformed = w @ aluthge(t) @ adjoint(w)
        np.testing.assert_allclose(transformed[:2, :2], split.invertible_block, atol=1e-10)
        assert np.linalg.norm(transformed[2:, :]) + np.linalg.norm(transformed[:, 2:]) <= 1e-10
        assert spectrum_distance(spectrum(split.invertible_block), [1, 2]) <= 1e-8

    def test_all_zero(self):
        split = split_singular(JORDAN_2)
        assert split.zero_dim == 2
        assert split.invertible_block.shape == (0, 0)

    def test_range_meeting_kernel(self, monkeypatch):
        monkeypatch.setattr(aluthge_module, "aluthge", lambda t: np.array([[0, 1], [0, 1]], dtype=complex))
        with pytest.raises(OrthogonalityError):
            split_singular(np.eye(2))


class TestMultiplicities:
    def test_jordan_block(self):
        assert multiplicities(JORDAN_2, 0) == (2, 1)

    def test_diagonal(self):
        assert multiplicities(np.diag([0, 0, 1]), 0) == (2, 2)
        assert multiplicities(np.diag([0, 0, 1]), 1) == (1, 1)

    def test_not_an_eigenvalue(self):
        assert multiplicities(np.diag([0, 0, 1]), 5) == (0, 0)

    def test_transform_of_jordan_block(self):
        # one step sends the nilpotent block to zero: geometric multiplicity jumps
        after = iterate(JORDAN_2, 1).iterates[1]
        assert multiplicities(after, 0) == (2, 2)

    @settings(max_examples=50)
    @given(seed=seeds, r=st.integers(2, 5))
    def test_geometric_multiplicity_never_drops(self, seed, r):
        rng = np.random.default_rng(seed)
        distinct = np.array([0.0, 1.0, -1.5, 2j, 1 + 1j])[: max(1, r - 1)]
        values = rng.choice(distinct, size=r)
        t = similar_to(values, seed)
        mu = values[0]
        before = multiplicities(t, mu)
        after = multiplicities(aluthge(t), mu)
        assert after.algebraic == before.algebraic
        assert after.geometric >= before.geometric
        assert after.geometric == after.algebraic


def _kernel_dim(x, reference: float) -> int:
    return x.shape[0] - numerical_rank(x, reference=reference)


class TestSingularTrajectories:
    NONZERO = np.array([1.0, -1.5, 2j])

    def _diagonalizable(self, seed):
        r = 2 + seed % 4
        zeros = 1 + seed % 2
        rng = np.random.default_rng(seed)
        values = np.concatenate([np.zeros(zeros), rng.choice(self.NONZERO, size=r - zeros)])
        return similar_to(values, seed), zeros, values[zeros:]

    def _jordan(self, seed, k):
        nonzero = self.NONZERO[: 1 + seed % 3]
        block = np.diag(np.ones(k - 1), 1).astype(complex)
        t = scipy.linalg.block_diag(block, np.diag(nonzero))
        u = random_unitary(t.shape[0], np.random.default_rng(seed))
        return u @ t @ adjoint(u), k, nonzero

    def _check(self, t, zero_multiplicity, nonzero):
        trajectory = iterate(t, 5)
        reference = scale(t)
        kernel = [_kernel_dim(x, reference) for x in trajectory.iterates]
        assert kernel == sorted(kernel)
        assert kernel[-1] == zero_multiplicity
        for mu in np.unique(nonzero):
            geometric = [multiplicities(x, mu).geometric for x in trajectory.iterates]
            assert geometric == sorted(geometric), mu

    @pytest.mark.parametrize("seed", range(20))
    def test_diagonalizable(self, seed):
        t, zeros, nonzero = self._diagonalizable(seed)
        self._check(t, zeros, nonzero)

    @pytest.mark.parametrize("k", [2, 3])
    @pytest.mark.parametrize("seed", range(10))
    def test_nilpotent_part_dies_within_k_steps(self, seed, k):
        t, zeros, nonzero = self._jordan(seed, k)
        trajectory = iterate(t, 5)
        kernel = [_kernel_dim(x, scale(t)) for x in trajectory.iterates]
        assert kernel[0] == 1
        assert kernel[k - 1] == k
        self._check(t, zeros, nonzero)

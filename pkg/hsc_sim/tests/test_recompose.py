#!/usr/bin/env python3
import pytest
import numpy as np

from hsc_sim.errors import (
    DimensionMismatch,
    EmptyInput,
    HscError,
    NotPositiveSemidefinite,
    NotSymmetric,
    RankOutOfRange,
)
from hsc_sim.hsc_recompose import (
    ProjectionBasis,
    achieved_mse,
    average_error_matrix,
    closed_form_mse,
    eig_psd,
    error_matrix,
    optimal_projection,
    orthonormalize_rows,
    projection_objective,
    random_orthonormal_basis,
    range_null_split,
    recompose,
)


def random_pair(rng, side):
    original = rng.uniform(size=(side, side))
    generated = np.clip(original + 0.2 * rng.standard_normal((side, side)), 0.0, 1.0)
    return original, generated


def random_psd(rng, side):
    factor = rng.standard_normal((side, side))
    return factor @ factor.T


class TestErrorMatrix:
    def test_identical_images(self):
        image = np.random.default_rng(0).uniform(size=(5, 5))
        assert np.all(error_matrix(image, image) == 0.0)

    def test_diagonal_difference(self):
        original = np.array([[np.sqrt(3.0), 0.0], [0.0, 1.0]])
        b = error_matrix(original, np.zeros((2, 2)))
        np.testing.assert_allclose(b, [[3.0, 0.0], [0.0, 1.0]], atol=1e-12)

    def test_random_pair_properties(self):
        original, generated = random_pair(np.random.default_rng(1), 6)
        b = error_matrix(original, generated)
        assert np.array_equal(b, b.T)
        assert np.all(np.linalg.eigvalsh(b) >= -1e-10)
        assert np.trace(b) == pytest.approx(np.sum((original - generated) ** 2), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            error_matrix(np.zeros((3, 3)), np.zeros((4, 4)))

    def test_non_square(self):
        with pytest.raises(DimensionMismatch):
            error_matrix(np.zeros((3, 4)), np.zeros((3, 4)))


class TestEigPsd:
    def test_identity(self):
        spectrum = eig_psd(np.eye(3))
        np.testing.assert_allclose(spectrum.eigenvalues, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(spectrum.eigenvectors @ spectrum.eigenvectors.T, np.eye(3), atol=1e-12)

    def test_diagonal(self):
        spectrum = eig_psd(np.diag([1.0, 3.0]))
        np.testing.assert_allclose(spectrum.eigenvalues, [3.0, 1.0])
        np.testing.assert_allclose(spectrum.eigenvectors, [[0.0, 1.0], [1.0, 0.0]], atol=1e-12)

    def test_matches_characteristic_polynomial(self):
        b = random_psd(np.random.default_rng(2), 8)
        roots = np.sort(np.real(np.roots(np.poly(b))))[::-1]
        np.testing.assert_allclose(eig_psd(b).eigenvalues, roots, rtol=1e-6, atol=1e-8)

    def test_spectrum_invariants(self):
        b = random_psd(np.random.default_rng(3), 10)
        spectrum = eig_psd(b)
        assert np.all(np.diff(spectrum.eigenvalues) <= 0.0)
        np.testing.assert_allclose(spectrum.eigenvectors @ spectrum.eigenvectors.T, np.eye(10), atol=1e-8)
        error = np.linalg.norm(spectrum.reconstruct() - b) / np.linalg.norm(b)
        assert error < 1e-8

    def test_jacobi_agrees_with_lapack(self):
        b = random_psd(np.random.default_rng(4), 12)
        lapack = eig_psd(b, "lapack")
        jacobi = eig_psd(b, "jacobi")
        np.testing.assert_allclose(jacobi.eigenvalues, lapack.eigenvalues, rtol=1e-8, atol=1e-10)
        # distinct eigenvalues, so the sign-normalized vectors coincide
        np.testing.assert_allclose(jacobi.eigenvectors, lapack.eigenvectors, atol=1e-6)

    def test_zero_matrix_gives_standard_basis(self):
        spectrum = eig_psd(np.zeros((4, 4)))
        assert np.all(spectrum.eigenvalues == 0.0)
        assert np.array_equal(spectrum.eigenvectors, np.eye(4))

    def test_asymmetric_rejected(self):
        with pytest.raises(NotSymmetric):
            eig_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(NotPositiveSemidefinite):
            eig_psd(-np.eye(3))
        with pytest.raises(HscError):
            eig_psd(np.diag([1.0, -0.5]), "jacobi")

    def test_rounding_noise_accepted(self):
        spectrum = eig_psd(np.diag([1.0, 0.0, -1e-14]))
        assert spectrum.eigenvalues[0] == pytest.approx(1.0)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            eig_psd(np.eye(2), "power")


class TestOptimalProjection:
    def test_rank_zero(self):
        basis = optimal_projection(eig_psd(np.diag([3.0, 1.0])), 0)
        assert basis.rank == 0
        assert np.all(basis.projector == 0.0)

    def test_dominant_axis(self):
        basis = optimal_projection(eig_psd(np.diag([3.0, 1.0])), 1)
        np.testing.assert_allclose(np.abs(basis.rows), [[1.0, 0.0]], atol=1e-12)

    def test_beats_random_bases(self):
        rng = np.random.default_rng(5)
        b = random_psd(rng, 6)
        best = projection_objective(optimal_projection(eig_psd(b), 2), b)
        for _ in range(1000):
            assert best <= projection_objective(random_orthonormal_basis(2, 6, rng), b) + 1e-9

    def test_rank_out_of_range(self):
        with pytest.raises(RankOutOfRange):
            optimal_projection(eig_psd(np.eye(3)), 4)


class TestRecompose:
    def test_rank_zero_returns_generated(self):
        original, generated = random_pair(np.random.default_rng(6), 5)
        basis = optimal_projection(eig_psd(error_matrix(original, generated)), 0)
        np.testing.assert_allclose(recompose(basis, basis.project(original), generated), generated)

    def test_full_rank_is_exact(self):
        original, generated = random_pair(np.random.default_rng(7), 8)
        basis = optimal_projection(eig_psd(error_matrix(original, generated)), 8)
        np.testing.assert_allclose(recompose(basis, basis.project(original), generated), original, atol=1e-10)

    def test_exact_prediction_any_basis(self):
        rng = np.random.default_rng(8)
        image = rng.uniform(size=(6, 6))
        basis = random_orthonormal_basis(3, 6, rng)
        np.testing.assert_allclose(recompose(basis, basis.project(image), image), image, atol=1e-12)

    def test_projected_shape_checked(self):
        basis = random_orthonormal_basis(2, 4, np.random.default_rng(9))
        with pytest.raises(DimensionMismatch):
            recompose(basis, np.zeros((3, 4)), np.zeros((4, 4)))

    def test_range_null_split_sums_to_image(self):
        rng = np.random.default_rng(10)
        image = rng.uniform(size=(6, 6))
        basis = random_orthonormal_basis(2, 6, rng)
        range_part, null_part = range_null_split(basis, image)
        np.testing.assert_allclose(range_part + null_part, image, atol=1e-12)
        np.testing.assert_allclose(basis.rows @ null_part, 0.0, atol=1e-12)


class TestClosedFormMse:
    def test_tail_sum(self):
        assert closed_form_mse(eig_psd(np.diag([3.0, 1.0])), 1) == pytest.approx(1.0)

    def test_full_rank_is_zero(self):
        assert closed_form_mse(eig_psd(np.diag([3.0, 1.0])), 2) == 0.0

    def test_matches_recomposition_for_every_rank(self):
        original, generated = random_pair(np.random.default_rng(11), 8)
        spectrum = eig_psd(error_matrix(original, generated))
        for d in range(8):
            basis = optimal_projection(spectrum, d)
            achieved = achieved_mse(original, recompose(basis, basis.project(original), generated)).raw
            assert achieved == pytest.approx(closed_form_mse(spectrum, d), rel=1e-8)

    def test_tied_eigenvalues_any_basis(self):
        # B = diag(2, 1, 1, 0): the second direction may be any unit vector in span(e2, e3)
        generated = np.zeros((4, 4))
        original = np.diag([np.sqrt(2.0), 1.0, 1.0, 0.0])
        spectrum = eig_psd(error_matrix(original, generated))
        np.testing.assert_allclose(spectrum.eigenvalues, [2.0, 1.0, 1.0, 0.0], atol=1e-12)
        assert closed_form_mse(spectrum, 2) == pytest.approx(1.0)
        chosen = optimal_projection(spectrum, 2)
        for theta in (0.0, 0.3, np.pi / 4, 2.0):
            rotated = ProjectionBasis(
                rows=np.array(
                    [
                        [1.0, 0.0, 0.0, 0.0],
                        [0.0, np.cos(theta), np.sin(theta), 0.0],
                    ]
                )
            )
            for basis in (chosen, rotated):
                recomposed = recompose(basis, basis.project(original), generated)
                assert achieved_mse(original, recomposed).raw == pytest.approx(1.0, rel=1e-10)


class TestAchievedMse:
    def test_identical(self):
        image = np.ones((3, 3))
        assert achieved_mse(image, image).raw == 0.0

    def test_all_ones_difference(self):
        mse = achieved_mse(np.ones((2, 2)), np.zeros((2, 2)))
        assert mse.raw == 4.0
        assert mse.per_pixel == 1.0

    def test_equals_error_matrix_trace(self):
        original, generated = random_pair(np.random.default_rng(12), 7)
        trace = np.trace(error_matrix(original, generated))
        assert achieved_mse(original, generated).raw == pytest.approx(trace, rel=1e-12)


class TestAverageErrorMatrix:
    def test_single_channel_unchanged(self):
        b = random_psd(np.random.default_rng(13), 4)
        np.testing.assert_array_equal(average_error_matrix([b]), b)

    def test_three_equal_matrices(self):
        b = random_psd(np.random.default_rng(14), 4)
        np.testing.assert_allclose(average_error_matrix([b, b, b]), b)

    def test_arithmetic_mean(self):
        channels = [np.diag([2.0, 0.0]), np.diag([0.0, 2.0]), np.diag([1.0, 1.0])]
        np.testing.assert_allclose(average_error_matrix(channels), np.eye(2))

    def test_empty(self):
        with pytest.raises(EmptyInput):
            average_error_matrix([])


class TestOrthonormalizeRows:
    def test_rows_become_orthonormal(self):
        rows = np.random.default_rng(15).standard_normal((3, 6))
        out = orthonormalize_rows(rows)
        np.testing.assert_allclose(out @ out.T, np.eye(3), atol=1e-12)

    def test_zero_row_replaced(self):
        rows = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        out = orthonormalize_rows(rows)
        np.testing.assert_allclose(out @ out.T, np.eye(2), atol=1e-12)

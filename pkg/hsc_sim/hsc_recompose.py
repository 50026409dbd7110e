"""Range-null space recomposition of images.

The transmitter sends the top-d eigenvectors A of the prediction error matrix
B = (X - X_hat)(X - X_hat)^T together with the projection AX. The receiver
recomposes

    X_tilde = A^T (AX) + (I - A^T A) X_hat

whose squared error is exactly the sum of the L - d smallest eigenvalues of B.
Bases are restricted to orthonormal rows, so the pseudoinverse of A is A^T.
"""

import typing
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    EmptyInput,
    NotPositiveSemidefinite,
    NotSymmetric,
    RankOutOfRange,
)

SYMMETRY_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-9
JACOBI_TOLERANCE = 1e-10
JACOBI_MAX_SIDE = 64
EIG_METHODS = ("lapack", "jacobi")


@dataclass(frozen=True)
class EigenSpectrum:
    """Eigen decomposition of a symmetric PSD matrix.

    Attributes:
        eigenvalues: length-L array sorted in descending order
        eigenvectors: L x L array whose row l is the eigenvector of eigenvalues[l]
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def side_length(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors.T * self.eigenvalues) @ self.eigenvectors


@dataclass(frozen=True)
class ProjectionBasis:
    """Projection matrix A with orthonormal rows (d x L)."""

    rows: np.ndarray

    @property
    def rank(self) -> int:
        return self.rows.shape[0]

    @property
    def side_length(self) -> int:
        return self.rows.shape[1]

    @property
    def projector(self) -> np.ndarray:
        """Range projector A^T A"""
        return self.rows.T @ self.rows

    @property
    def null_projector(self) -> np.ndarray:
        """Null projector I - A^T A"""
        return np.eye(self.side_length) - self.projector

    def project(self, image: np.ndarray) -> np.ndarray:
        """AX for a single L x L image"""
        return self.rows @ image


@dataclass(frozen=True)
class MseValue:
    """Squared reconstruction error in raw Frobenius form and per pixel."""

    raw: float
    per_pixel: float

    @classmethod
    def from_raw(cls, raw: float, pixel_count: int) -> "MseValue":
        return cls(raw=float(raw), per_pixel=float(raw) / pixel_count)


def as_image(pixels: typing.Any) -> np.ndarray:
    """Validate and convert an L x L (or L x L x C) pixel array to float64."""
    image = np.asarray(pixels, dtype=np.float64)
    if image.ndim not in (2, 3) or image.shape[0] != image.shape[1]:
        raise DimensionMismatch(f"Expected a square image, got shape {image.shape}")
    if image.shape[0] < 1:
        raise DimensionMismatch("Image side length must be at least 1")
    if not np.all(np.isfinite(image)):
        raise ValueError("Image contains non-finite pixels")
    return image


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionMismatch(f"Shapes {a.shape} and {b.shape} differ")


def _check_rank(d: int, side_length: int):
    if not 0 <= d <= side_length:
        raise RankOutOfRange(f"d = {d} is outside [0, {side_length}]")


def error_matrix(original: np.ndarray, generated: np.ndarray) -> np.ndarray:
    """B = (X - X_hat)(X - X_hat)^T, symmetrized so B == B^T exactly."""
    original = as_image(original)
    generated = as_image(generated)
    _check_same_shape(original, generated)
    if original.ndim != 2:
        raise DimensionMismatch("error_matrix expects single-channel images")
    diff = original - generated
    b = diff @ diff.T
    return 0.5 * (b + b.T)


def average_error_matrix(channels: typing.Sequence[np.ndarray]) -> np.ndarray:
    """Element-wise mean of per-channel error matrices."""
    if len(channels) == 0:
        raise EmptyInput("Cannot average an empty list of error matrices")
    first = np.asarray(channels[0], dtype=np.float64)
    for matrix in channels[1:]:
        if np.shape(matrix) != first.shape:
            raise DimensionMismatch(
                f"Error matrix shapes {first.shape} and {np.shape(matrix)} differ"
            )
    return np.mean(np.stack([np.asarray(m, dtype=np.float64) for m in channels]), axis=0)


def _jacobi_eigh(b: np.ndarray, tolerance: float, max_sweeps: int):
    """Cyclic Jacobi rotations; returns (eigenvalues, column eigenvectors)."""
    a = b.copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n < 2 or scale == 0.0:
        return np.diag(a).copy(), v
    # rotations below this magnitude are no-ops in double precision
    skip = 1e-17 * scale

    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tolerance * scale:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    raise ConvergenceFailure(
        f"Jacobi eigen-solver did not converge within {max_sweeps} sweeps"
    )


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so that its first non-negligible component is positive."""
    vectors = vectors.copy()
    for row in vectors:
        significant = np.flatnonzero(np.abs(row) > 1e-10)
        if significant.size and row[significant[0]] < 0.0:
            row *= -1.0
    return vectors


def eig_psd(b: np.ndarray, method: str = "lapack") -> EigenSpectrum:
    """Eigen decomposition of a symmetric PSD error matrix.

    Args:
        b: L x L symmetric matrix
        method: "lapack" (tridiagonalization + implicit QR via numpy) or
                "jacobi" (cyclic Jacobi rotations, L <= 64)
    Returns:
        EigenSpectrum with descending eigenvalues and sign-normalized eigenvectors
    """
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise DimensionMismatch(f"Expected a square matrix, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("Error matrix contains non-finite entries")
    asymmetry = np.max(np.abs(b - b.T)) if b.size else 0.0
    if asymmetry > SYMMETRY_TOLERANCE:
        raise NotSymmetric(f"Matrix asymmetry {asymmetry:.3e} exceeds tolerance")

    side_length = b.shape[0]
    if method not in EIG_METHODS:
        raise ValueError(f"Unknown eigen-solver {method}, expected one of {EIG_METHODS}")
    if not np.any(b):
        # perfect prediction: every basis is optimal, use the standard one
        return EigenSpectrum(np.zeros(side_length), np.eye(side_length))
    if method == "jacobi":
        if side_length > JACOBI_MAX_SIDE:
            raise ValueError(
                f"Jacobi solver is limited to L <= {JACOBI_MAX_SIDE}, got {side_length}"
            )
        values, vectors = _jacobi_eigh(b, JACOBI_TOLERANCE, 100 * max(side_length, 1))
    else:
        try:
            values, vectors = np.linalg.eigh(b)
        except np.linalg.LinAlgError as e:
            raise ConvergenceFailure(f"LAPACK eigen-solver failed: {e}")

    scale = max(1.0, float(np.max(np.abs(values))))
    if values.min() < -PSD_TOLERANCE * scale:
        raise NotPositiveSemidefinite(
            f"Smallest eigenvalue {values.min():.3e} is negative beyond tolerance"
        )

    order = np.argsort(-values, kind="stable")
    return EigenSpectrum(
        eigenvalues=values[order],
        eigenvectors=_canonical_signs(vectors[:, order].T),
    )


def optimal_projection(spectrum: EigenSpectrum, d: int) -> ProjectionBasis:
    """A = [e_1 ... e_d]^T, the eigenvectors of the d largest eigenvalues.

    d = 0 returns an empty basis, which reduces the hybrid link to semantic-only.
    """
    _check_rank(d, spectrum.side_length)
    return ProjectionBasis(rows=spectrum.eigenvectors[:d].copy())


def recompose(
    basis: ProjectionBasis, projected: np.ndarray, generated: np.ndarray
) -> np.ndarray:
    """X_tilde = A^T (AX) + (I - A^T A) X_hat for a single-channel image."""
    generated = as_image(generated)
    projected = np.asarray(projected, dtype=np.float64)
    if generated.ndim != 2 or generated.shape[0] != basis.side_length:
        raise DimensionMismatch(
            f"Generated image {generated.shape} does not fit basis side {basis.side_length}"
        )
    if projected.shape != (basis.rank, generated.shape[1]):
        raise DimensionMismatch(
            f"Projected block {projected.shape} does not match ({basis.rank}, {generated.shape[1]})"
        )
    a = basis.rows
    return a.T @ projected + generated - a.T @ (a @ generated)


def range_null_split(
    basis: ProjectionBasis, image: np.ndarray
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """Split X into its range part A^T A X and null part (I - A^T A) X."""
    image = as_image(image)
    range_part = basis.rows.T @ (basis.rows @ image)
    return range_part, image - range_part


def closed_form_mse(spectrum: EigenSpectrum, d: int) -> float:
    """Minimum squared error sum_{l > d} lambda_l, round-off negatives clamped."""
    _check_rank(d, spectrum.side_length)
    return float(np.sum(np.clip(spectrum.eigenvalues[d:], 0.0, None)))


def achieved_mse(original: np.ndarray, recomposed: np.ndarray) -> MseValue:
    """Squared Frobenius error, reported raw and per pixel."""
    original = as_image(original)
    recomposed = as_image(recomposed)
    _check_same_shape(original, recomposed)
    diff = original - recomposed
    return MseValue.from_raw(np.sum(diff * diff), diff.size)


def projection_objective(basis: ProjectionBasis, b: np.ndarray) -> float:
    """Tr((I - A^T A) B), the error left by basis A on error matrix B."""
    b = np.asarray(b, dtype=np.float64)
    return float(np.trace(b) - np.sum(basis.rows * (basis.rows @ b)))


def random_orthonormal_basis(
    d: int, side_length: int, rng: np.random.Generator
) -> ProjectionBasis:
    """Uniformly random d x L basis with orthonormal rows (QR of a Gaussian)."""
    _check_rank(d, side_length)
    if d == 0:
        return ProjectionBasis(rows=np.zeros((0, side_length)))
    q, r = np.linalg.qr(rng.standard_normal((side_length, d)))
    q = q * np.sign(np.diag(r))
    return ProjectionBasis(rows=q.T.copy())


def orthonormalize_rows(rows: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt on the rows of a d x L matrix.

    Rows that collapse to zero are replaced by the first standard basis vector
    that is still linearly independent of the rows kept so far.
    """
    rows = np.asarray(rows, dtype=np.float64)
    d, side_length = rows.shape
    if d > side_length:
        raise RankOutOfRange(f"Cannot orthonormalize {d} rows of length {side_length}")
    out = np.zeros_like(rows)
    candidates = iter(np.eye(side_length))
    for i in range(d):
        vector = rows[i].copy()
        for _ in range(side_length + 1):
            # two passes keep the rows orthogonal to working precision
            for _ in range(2):
                for j in range(i):
                    vector -= (out[j] @ vector) * out[j]
            norm = np.linalg.norm(vector)
            if norm > 1e-12:
                break
            vector = next(candidates).copy()
        out[i] = vector / norm
    return out

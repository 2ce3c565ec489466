"""Symmetric-matrix primitives used throughout the package.

All routines accept batched inputs: a matrix argument of shape ``(..., n, n)``
is processed along the leading axes in one vectorized call.  Eigenvalue floors
are relative to the spectral norm of each matrix so that tolerances do not
depend on overall scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, NonFinite, NotPsd, NotSpd

PSD_FLOOR_REL = 1e-12
SPD_FLOOR_REL = 1e-12


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """Return the symmetric part ``(mat + mat.T) / 2`` (batched)."""
    mat = np.asarray(mat, dtype=float)
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


@dataclass(frozen=True, eq=False)
class SpdFactorization:
    """Eigendecomposition ``M = V diag(w) V.T`` of a symmetric matrix.

    ``eigenvalues`` are ascending per batch element and ``eigenvectors``
    columns are the matching orthonormal basis, exactly as returned by a
    symmetric eigensolver.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return np.einsum("...ij,...j,...kj->...ik", v, self.eigenvalues, v)

    def apply_power(self, power: float) -> np.ndarray:
        """Return ``V diag(w**power) V.T`` without re-factorizing."""
        v = self.eigenvectors
        return np.einsum(
            "...ij,...j,...kj->...ik", v, self.eigenvalues**power, v
        )


def sym_factor(mat: np.ndarray) -> SpdFactorization:
    """Eigendecompose the symmetric part of ``mat`` (batched)."""
    mat = symmetrize(mat)
    if not np.all(np.isfinite(mat)):
        raise NonFinite("matrix has non-finite entries")
    w, v = np.linalg.eigh(mat)
    return SpdFactorization(eigenvalues=w, eigenvectors=v)


def spd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root of a positive semidefinite matrix.

    Eigenvalues below ``-PSD_FLOOR_REL * ||mat||_2`` raise :class:`NotPsd`;
    small negatives inside that band are clamped to zero before the root is
    taken, so exact zeros (rank-deficient inputs) are fine.
    """
    fac = sym_factor(mat)
    w = fac.eigenvalues
    scale = np.abs(w).max(axis=-1, keepdims=True)
    if np.any(w < -PSD_FLOOR_REL * scale):
        raise NotPsd(
            f"matrix has eigenvalue {w.min():.3e} below the PSD floor"
        )
    root = SpdFactorization(np.clip(w, 0.0, None), fac.eigenvectors)
    return root.apply_power(0.5)


def spd_inv_sqrt(mat: np.ndarray) -> np.ndarray:
    """Inverse symmetric square root of a positive definite matrix.

    Raises :class:`NotSpd` when the smallest eigenvalue does not clear
    ``SPD_FLOOR_REL * ||mat||_2``.
    """
    fac = sym_factor(mat)
    w = fac.eigenvalues
    scale = np.abs(w).max(axis=-1, keepdims=True)
    if np.any(w <= SPD_FLOOR_REL * scale) or np.any(scale == 0.0):
        raise NotSpd(
            f"matrix has eigenvalue {w.min():.3e} at or below the SPD floor"
        )
    return fac.apply_power(-0.5)


def quad_form(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Quadratic form ``vec.T @ mat @ vec`` with batching on either side."""
    return np.einsum("...i,...ij,...j->...", vec, mat, vec)


@dataclass(frozen=True)
class GivensRotation:
    """Plane rotation by ``angle`` radians in the (axis_i, axis_j) plane.

    The dense form puts ``cos`` on both diagonal entries, ``-sin`` at
    ``[axis_i, axis_j]`` and ``+sin`` at ``[axis_j, axis_i]``.
    """

    axis_i: int
    axis_j: int
    angle: float

    def __post_init__(self) -> None:
        if self.axis_i == self.axis_j:
            raise IndexOutOfRange("rotation plane needs two distinct axes")
        if self.axis_i < 0 or self.axis_j < 0:
            raise IndexOutOfRange("rotation axes must be non-negative")

    def matrix(self, dim: int) -> np.ndarray:
        if self.axis_i >= dim or self.axis_j >= dim:
            raise IndexOutOfRange(
                f"axes ({self.axis_i}, {self.axis_j}) exceed dimension {dim}"
            )
        out = np.eye(dim)
        c = np.cos(self.angle)
        s = np.sin(self.angle)
        out[self.axis_i, self.axis_i] = c
        out[self.axis_j, self.axis_j] = c
        out[self.axis_i, self.axis_j] = -s
        out[self.axis_j, self.axis_i] = s
        return out


def rotate_rows(
    mat: np.ndarray, i: int, j: int, cos: np.ndarray, sin: np.ndarray
) -> None:
    """Left-multiply ``mat`` in place by the (i, j) plane rotation.

    ``mat`` has shape ``(..., n, k)``; ``cos`` and ``sin`` broadcast against
    the batch axes, which lets a state-dependent angle act on a batch of
    matrices in one shot.
    """
    row_i = mat[..., i, :].copy()
    row_j = mat[..., j, :]
    c = np.asarray(cos)[..., None]
    s = np.asarray(sin)[..., None]
    mat[..., i, :] = c * row_i - s * row_j
    mat[..., j, :] = s * row_i + c * row_j


def apply_givens_product(
    rotations: list[GivensRotation] | tuple[GivensRotation, ...], dim: int
) -> np.ndarray:
    """Dense product ``G_1 @ G_2 @ ... @ G_L`` of plane rotations.

    The first rotation in the list is the leftmost factor.  Cost is
    ``O(L * dim)`` row updates rather than ``L`` dense multiplies.
    """
    out = np.eye(dim)
    for rot in reversed(rotations):
        if rot.axis_i >= dim or rot.axis_j >= dim:
            raise IndexOutOfRange(
                f"axes ({rot.axis_i}, {rot.axis_j}) exceed dimension {dim}"
            )
        rotate_rows(out, rot.axis_i, rot.axis_j, np.cos(rot.angle), np.sin(rot.angle))
    return out


def spectral_radius(mat: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a square (not necessarily symmetric) matrix."""
    mat = np.asarray(mat, dtype=float)
    if not np.all(np.isfinite(mat)):
        raise NonFinite("matrix has non-finite entries")
    return float(np.abs(np.linalg.eigvals(mat)).max())


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random rotation built from one Givens factor per coordinate plane.

    Deterministic given the generator state; determinant is +1.
    """
    rotations = []
    for i in range(dim):
        for j in range(i + 1, dim):
            rotations.append(GivensRotation(i, j, float(rng.uniform(0.0, 2.0 * np.pi))))
    return apply_givens_product(rotations, dim)


def random_spd(
    dim: int, condition_number: float, rng: np.random.Generator
) -> np.ndarray:
    """Random SPD matrix with the given condition number pinned exactly.

    The spectrum is ``{1, condition_number}`` plus ``dim - 2`` log-uniform
    interior eigenvalues, conjugated by a random rotation.  ``dim == 1``
    requires ``condition_number == 1``.
    """
    if dim < 1:
        raise ValueError("dimension must be at least 1")
    if condition_number < 1.0:
        raise ValueError("condition number must be at least 1")
    if dim == 1:
        if condition_number != 1.0:
            raise ValueError("a 1x1 matrix cannot have condition number > 1")
        return np.array([[1.0]])
    interior = np.exp(
        rng.uniform(0.0, np.log(condition_number), size=max(dim - 2, 0))
    )
    eigs = np.concatenate([[1.0, condition_number], interior])
    basis = random_orthogonal(dim, rng)
    return symmetrize(basis @ np.diag(eigs) @ basis.T)

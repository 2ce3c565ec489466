from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qgbench.errors import IndexOutOfRange, NonFinite, NotPsd, NotSpd
from qgbench.linalg import (
    GivensRotation,
    apply_givens_product,
    quad_form,
    random_orthogonal,
    random_spd,
    rotate_rows,
    spd_inv_sqrt,
    spd_sqrt,
    spectral_radius,
    sym_factor,
    symmetrize,
)

SQRT3 = np.sqrt(3.0)


def test_symmetrize_basic():
    mat = np.array([[1.0, 2.0], [0.0, 3.0]])
    sym = symmetrize(mat)
    assert np.array_equal(sym, sym.T)
    assert np.array_equal(sym, np.array([[1.0, 1.0], [1.0, 3.0]]))
    # idempotent on symmetric input
    assert np.array_equal(symmetrize(sym), sym)


def test_spd_sqrt_frozen_example():
    # Eigenpairs of [[2,1],[1,2]] are (1, (1,-1)/sqrt2) and (3, (1,1)/sqrt2),
    # so the root is [[(sqrt3+1)/2, (sqrt3-1)/2], [(sqrt3-1)/2, (sqrt3+1)/2]].
    mat = np.array([[2.0, 1.0], [1.0, 2.0]])
    expected = 0.5 * np.array([[SQRT3 + 1.0, SQRT3 - 1.0], [SQRT3 - 1.0, SQRT3 + 1.0]])
    assert np.allclose(spd_sqrt(mat), expected, rtol=0.0, atol=1e-14)


def test_spd_sqrt_diagonal_and_rank_deficient():
    assert np.allclose(
        spd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14
    )
    # exact zero eigenvalue is accepted
    rank1 = np.array([[1.0, 1.0], [1.0, 1.0]])
    root = spd_sqrt(rank1)
    assert np.allclose(root @ root, rank1, atol=1e-12)


def test_spd_sqrt_rejects_indefinite():
    with pytest.raises(NotPsd):
        spd_sqrt(np.diag([1.0, -1e-6]))


def test_spd_inv_sqrt_scalar_frozen():
    # (9/19)^(-1/2) = sqrt(19/9)
    out = spd_inv_sqrt(np.array([[9.0 / 19.0]]))
    assert abs(out[0, 0] - np.sqrt(19.0 / 9.0)) < 1e-14


def test_spd_inv_sqrt_rejects_singular_and_zero():
    with pytest.raises(NotSpd):
        spd_inv_sqrt(np.diag([1.0, 0.0]))
    with pytest.raises(NotSpd):
        spd_inv_sqrt(np.zeros((2, 2)))


def test_sym_factor_rejects_non_finite():
    with pytest.raises(NonFinite):
        sym_factor(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_sym_factor_reconstruct_and_power(rng):
    mat = random_spd(4, 10.0, rng)
    fac = sym_factor(mat)
    assert np.allclose(fac.reconstruct(), mat, atol=1e-12)
    inv = fac.apply_power(-1.0)
    assert np.allclose(inv @ mat, np.eye(4), atol=1e-10)


def test_spd_sqrt_batched_matches_loop(rng):
    mats = np.stack([random_spd(3, 5.0, rng) for _ in range(4)])
    batched = spd_sqrt(mats)
    for k in range(4):
        assert np.allclose(batched[k], spd_sqrt(mats[k]), atol=1e-13)


def test_quad_form_matches_direct(rng):
    mat = random_spd(3, 2.0, rng)
    vec = rng.normal(size=3)
    assert np.isclose(quad_form(mat, vec), vec @ mat @ vec, atol=1e-13)
    batch = rng.normal(size=(5, 3))
    out = quad_form(mat, batch)
    assert out.shape == (5,)
    for k in range(5):
        assert np.isclose(out[k], batch[k] @ mat @ batch[k], atol=1e-13)


def test_givens_matrix_frozen_quarter_turn():
    rot = GivensRotation(0, 1, np.pi / 2.0)
    expected = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert np.allclose(rot.matrix(2), expected, atol=1e-12)


def test_givens_embeds_in_larger_dimension():
    rot = GivensRotation(1, 3, 0.3)
    mat = rot.matrix(5)
    c, s = np.cos(0.3), np.sin(0.3)
    assert mat[1, 1] == c and mat[3, 3] == c
    assert mat[1, 3] == -s and mat[3, 1] == s
    assert mat[0, 0] == 1.0 and mat[2, 2] == 1.0 and mat[4, 4] == 1.0


def test_givens_index_validation():
    with pytest.raises(IndexOutOfRange):
        GivensRotation(2, 2, 0.1)
    with pytest.raises(IndexOutOfRange):
        GivensRotation(-1, 0, 0.1)
    with pytest.raises(IndexOutOfRange):
        GivensRotation(0, 5, 0.1).matrix(3)
    with pytest.raises(IndexOutOfRange):
        apply_givens_product([GivensRotation(0, 5, 0.1)], 3)


def test_rotate_rows_matches_dense_multiply(rng):
    mat = rng.normal(size=(4, 3))
    work = mat.copy()
    rot = GivensRotation(1, 3, 0.7)
    rotate_rows(work, 1, 3, np.cos(0.7), np.sin(0.7))
    assert np.allclose(work, rot.matrix(4) @ mat, atol=1e-14)


def test_apply_givens_product_order():
    # First rotation in the list is the leftmost factor: G1 @ G2.
    g1 = GivensRotation(0, 1, 0.4)
    g2 = GivensRotation(1, 2, -0.9)
    prod = apply_givens_product([g1, g2], 3)
    assert np.allclose(prod, g1.matrix(3) @ g2.matrix(3), atol=1e-14)
    assert not np.allclose(prod, g2.matrix(3) @ g1.matrix(3), atol=1e-6)


def test_apply_givens_product_empty_is_identity():
    assert np.array_equal(apply_givens_product([], 3), np.eye(3))


def test_same_plane_angles_add():
    a = apply_givens_product(
        [GivensRotation(0, 1, 0.3), GivensRotation(0, 1, 0.5)], 2
    )
    b = GivensRotation(0, 1, 0.8).matrix(2)
    assert np.allclose(a, b, atol=1e-14)


@given(
    st.lists(
        st.tuples(
            st.integers(min_value=0, max_value=3),
            st.integers(min_value=0, max_value=3),
            st.floats(min_value=-10.0, max_value=10.0),
        ),
        max_size=8,
    )
)
def test_givens_products_are_rotations(spec):
    rotations = [
        GivensRotation(i, j, angle) for i, j, angle in spec if i != j
    ]
    mat = apply_givens_product(rotations, 4)
    assert np.allclose(mat.T @ mat, np.eye(4), atol=1e-12)
    assert np.isclose(np.linalg.det(mat), 1.0, atol=1e-12)


@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_spd_roundtrips(seed):
    rng = np.random.default_rng(seed)
    mat = random_spd(3, float(rng.uniform(1.0, 50.0)), rng)
    root = spd_sqrt(mat)
    assert np.allclose(root @ root, mat, atol=1e-10 * np.linalg.norm(mat))
    inv_root = spd_inv_sqrt(mat)
    assert np.allclose(inv_root @ mat @ inv_root, np.eye(3), atol=1e-9)


def test_spectral_radius_rotation_scaled():
    rot = GivensRotation(0, 1, 0.7).matrix(2)
    assert np.isclose(spectral_radius(1.3 * rot), 1.3, atol=1e-12)


def test_spectral_radius_diagonal_and_nonfinite():
    assert spectral_radius(np.diag([2.0, -3.0])) == 3.0
    with pytest.raises(NonFinite):
        spectral_radius(np.array([[np.inf, 0.0], [0.0, 1.0]]))


def test_random_orthogonal_properties(rng):
    mat = random_orthogonal(5, rng)
    assert np.allclose(mat.T @ mat, np.eye(5), atol=1e-12)
    assert np.isclose(np.linalg.det(mat), 1.0, atol=1e-12)


def test_random_orthogonal_deterministic():
    a = random_orthogonal(4, np.random.default_rng(42))
    b = random_orthogonal(4, np.random.default_rng(42))
    assert np.array_equal(a, b)


def test_random_spd_condition_number_pinned():
    rng = np.random.default_rng(5)
    mat = random_spd(4, 50.0, rng)
    eigs = np.linalg.eigvalsh(mat)
    assert np.all(eigs > 0.0)
    assert abs(eigs.max() / eigs.min() - 50.0) < 1e-6
    assert np.allclose(mat, mat.T)


def test_random_spd_small_dims_and_validation():
    rng = np.random.default_rng(0)
    assert np.array_equal(random_spd(1, 1.0, rng), np.array([[1.0]]))
    with pytest.raises(ValueError):
        random_spd(1, 2.0, rng)
    with pytest.raises(ValueError):
        random_spd(3, 0.5, rng)
    with pytest.raises(ValueError):
        random_spd(0, 1.0, rng)
    two = random_spd(2, 7.0, rng)
    eigs = np.linalg.eigvalsh(two)
    assert abs(eigs.max() / eigs.min() - 7.0) < 1e-9


def test_random_spd_deterministic():
    a = random_spd(3, 9.0, np.random.default_rng(123))
    b = random_spd(3, 9.0, np.random.default_rng(123))
    assert np.array_equal(a, b)

from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tensordenoise.errors import ArgumentError, NumericError, ShapeError
from tensordenoise.tensors.core import (
    dematricize,
    frobenius_norm,
    inverse_permutation,
    matricize,
    n_mode_product,
    permute_axes,
    relative_error,
    reshape,
    svd,
)

SHAPES = st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=4).map(tuple)


def test_reshape_keeps_row_major_order() -> None:
    t = np.arange(1.0, 7.0).reshape(2, 3)
    out = reshape(t, (3, 2))
    assert out.shape == (3, 2)
    np.testing.assert_array_equal(out.ravel(), np.arange(1.0, 7.0))


def test_reshape_singleton_and_flatten() -> None:
    np.testing.assert_array_equal(reshape(np.array([7.0]), (1, 1, 1)), [[[7.0]]])
    t = np.arange(169 * 3 * 8 * 8, dtype=np.float64).reshape(169, 3, 8, 8)
    flat = reshape(t, (169, 192))
    np.testing.assert_array_equal(flat.ravel(), t.ravel())


def test_reshape_rejects_size_mismatch() -> None:
    with pytest.raises(ShapeError):
        reshape(np.zeros((2, 3)), (4, 2))


def test_permute_transpose_and_identity(rng: np.random.Generator) -> None:
    m = rng.standard_normal((2, 3))
    np.testing.assert_array_equal(permute_axes(m, (1, 0)), m.T)
    t = rng.standard_normal((2, 3, 4))
    assert permute_axes(t, (0, 1, 2)).tobytes() == t.tobytes()


def test_permute_matches_index_arithmetic(rng: np.random.Generator) -> None:
    t = rng.standard_normal((2, 3, 4))
    out = permute_axes(t, (2, 0, 1))
    assert out.shape == (4, 2, 3)
    for i, j, k in itertools.product(range(2), range(3), range(4)):
        assert out[k, i, j] == t[i, j, k]


@pytest.mark.parametrize("order", [(0, 0, 1), (0, 1), (0, 1, 3)])
def test_permute_rejects_invalid_order(order: tuple[int, ...]) -> None:
    with pytest.raises(ArgumentError):
        permute_axes(np.zeros((2, 2, 2)), order)


def test_inverse_permutation_undoes_permute(rng: np.random.Generator) -> None:
    t = rng.standard_normal((2, 3, 4, 5))
    order = (0, 2, 3, 1)
    back = permute_axes(permute_axes(t, order), inverse_permutation(order))
    np.testing.assert_array_equal(back, t)
    assert inverse_permutation(order) == (0, 3, 1, 2)


def test_matricize_small_cases() -> None:
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matricize(m, 0), m)
    t = np.arange(8.0).reshape(2, 2, 2)
    np.testing.assert_array_equal(matricize(t, 1), [[0, 1, 4, 5], [2, 3, 6, 7]])


def test_matricize_rejects_bad_mode() -> None:
    with pytest.raises(ArgumentError):
        matricize(np.zeros((2, 2)), 2)


@given(shape=SHAPES, data=st.data())
@settings(max_examples=60, deadline=None)
def test_matricize_roundtrip_is_exact(shape: tuple[int, ...], data: st.DataObject) -> None:
    mode = data.draw(st.integers(min_value=0, max_value=len(shape) - 1))
    t = np.random.default_rng(len(shape)).standard_normal(shape)
    assert dematricize(matricize(t, mode), mode, shape).tobytes() == t.tobytes()


def test_n_mode_product_identity_and_matrix_case(rng: np.random.Generator) -> None:
    t = rng.standard_normal((3, 4, 2))
    np.testing.assert_array_equal(n_mode_product(t, np.eye(4), 1), t)
    m = rng.standard_normal((5, 3))
    a = rng.standard_normal((3, 4))
    np.testing.assert_allclose(n_mode_product(a, m, 0), m @ a, atol=1e-14)


def test_n_mode_product_matches_loop_oracle(rng: np.random.Generator) -> None:
    t = rng.standard_normal((2, 3, 2))
    m = rng.standard_normal((4, 3))
    out = n_mode_product(t, m, 1)
    assert out.shape == (2, 4, 2)
    for i, j, k in itertools.product(range(2), range(4), range(2)):
        expected = sum(t[i, n, k] * m[j, n] for n in range(3))
        assert abs(out[i, j, k] - expected) < 1e-12


def test_n_mode_product_dimension_mismatch() -> None:
    with pytest.raises(ShapeError):
        n_mode_product(np.zeros((2, 3)), np.zeros((4, 2)), 1)


def test_n_mode_products_on_distinct_modes_commute(rng: np.random.Generator) -> None:
    t = rng.standard_normal((3, 4, 5))
    a = rng.standard_normal((6, 3))
    b = rng.standard_normal((2, 5))
    first = n_mode_product(n_mode_product(t, a, 0), b, 2)
    second = n_mode_product(n_mode_product(t, b, 2), a, 0)
    assert first.shape == (6, 4, 2)
    np.testing.assert_allclose(first, second, atol=1e-12)


def test_n_mode_products_on_the_same_mode_compose(rng: np.random.Generator) -> None:
    t = rng.standard_normal((3, 4, 2))
    a = rng.standard_normal((5, 4))
    b = rng.standard_normal((2, 5))
    np.testing.assert_allclose(
        n_mode_product(n_mode_product(t, a, 1), b, 1), n_mode_product(t, b @ a, 1), atol=1e-12
    )


def test_svd_simple_spectra() -> None:
    np.testing.assert_allclose(svd(np.eye(3)).singular_values, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(svd(np.diag([3.0, 2.0, 1.0])).singular_values, [3.0, 2.0, 1.0])


@pytest.mark.parametrize("shape", [(5, 3), (3, 5), (4, 4), (1, 6)])
def test_svd_reconstructs_with_orthonormal_factors(
    rng: np.random.Generator, shape: tuple[int, int]
) -> None:
    m = rng.standard_normal(shape)
    res = svd(m)
    k = res.singular_values.shape[0]
    np.testing.assert_allclose(res.u.T @ res.u, np.eye(k), atol=1e-10)
    np.testing.assert_allclose(res.vt @ res.vt.T, np.eye(k), atol=1e-10)
    approx = res.u @ np.diag(res.singular_values) @ res.vt
    assert relative_error(m, approx) < 1e-10


def test_svd_sign_convention(rng: np.random.Generator) -> None:
    for _ in range(20):
        res = svd(rng.standard_normal((6, 4)))
        for col in res.u.T:
            assert col[int(np.argmax(np.abs(col)))] >= 0.0


@pytest.mark.parametrize("shape", [(64, 64), (64, 17), (9, 64), (33, 48)])
def test_svd_is_bitwise_deterministic(rng: np.random.Generator, shape: tuple[int, int]) -> None:
    m = rng.standard_normal(shape)
    first, second = svd(m), svd(m)
    assert first.u.tobytes() == second.u.tobytes()
    assert first.singular_values.tobytes() == second.singular_values.tobytes()
    assert first.vt.tobytes() == second.vt.tobytes()


def test_svd_full_matrices_completes_basis(rng: np.random.Generator) -> None:
    res = svd(rng.standard_normal((5, 2)), full_matrices=True)
    assert res.u.shape == (5, 5)
    np.testing.assert_allclose(res.u.T @ res.u, np.eye(5), atol=1e-10)


def test_svd_rejects_non_finite() -> None:
    with pytest.raises(NumericError):
        svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_frobenius_norm_cases() -> None:
    assert frobenius_norm(np.zeros((3, 3))) == 0.0
    assert frobenius_norm(np.array([3.0])) == 3.0
    assert frobenius_norm(np.array([3.0, 4.0])) == 5.0


def test_relative_error_against_zero_reference_is_absolute() -> None:
    assert relative_error(np.zeros(2), np.array([3.0, 4.0])) == 5.0

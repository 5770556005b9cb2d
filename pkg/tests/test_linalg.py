import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polywalk.exceptions import InvalidInputError
from polywalk.linalg import nullspace_basis, nullspace_vector, rank, rref


def test_single_row_nullspace_is_antidiagonal():
    r = nullspace_vector([[1, 1]])
    assert np.allclose(r / r[0], [1, -1])
    assert np.abs(r).max() == 1.0


def test_identity_has_no_nullspace():
    assert nullspace_vector(np.eye(2)) is None


def test_chain_nullspace():
    A = np.array([[1, 1, 0], [0, 1, 1]])
    r = nullspace_vector(A)
    assert np.allclose(A @ r, 0)
    assert np.allclose(r / r[0], [1, -1, 1])


@pytest.mark.parametrize(
    "A, expected",
    [(np.zeros((3, 4)), 0), (np.eye(3), 3), ([[1, 2], [2, 4]], 1)],
)
def test_rank_examples(A, expected):
    assert rank(A) == expected


def test_non_finite_rejected():
    with pytest.raises(InvalidInputError):
        rank([[1, np.nan]])
    with pytest.raises(InvalidInputError):
        nullspace_vector([[np.inf, 1]])


def test_bad_tolerance():
    with pytest.raises(InvalidInputError):
        rref([[1.0]], tol=0)


def test_which_selects_later_free_column():
    A = [[1, 1, 1]]
    r0, r1 = nullspace_vector(A, which=0), nullspace_vector(A, which=1)
    assert not np.allclose(r0, r1)
    assert nullspace_vector(A, which=2) is None


int_matrices = st.integers(1, 6).flatmap(
    lambda r: st.integers(1, 8).flatmap(
        lambda c: arrays(np.int64, (r, c), elements=st.integers(-3, 3))
    )
)


@given(int_matrices)
def test_rank_matches_exact_rational_rank(A):
    assert rank(A) == sympy.Matrix(A.tolist()).rank()


@given(int_matrices)
def test_rank_nullity(A):
    basis = nullspace_basis(A)
    assert rank(A) + len(basis) == A.shape[1]
    scale = np.linalg.norm(A, np.inf)
    for r in basis:
        assert np.abs(r).max() == pytest.approx(1.0)
        assert np.abs(A @ r).max() <= 1e-9 * scale
    if basis:
        assert np.linalg.matrix_rank(np.array(basis)) == len(basis)


@given(arrays(np.float64, (4, 6), elements=st.floats(-5, 5, allow_nan=False)))
def test_returned_vector_in_nullspace(A):
    r = nullspace_vector(A)
    assert r is not None  # 4 rows, 6 columns
    assert np.abs(A @ r).max() <= 1e-9 * np.linalg.norm(A, np.inf)

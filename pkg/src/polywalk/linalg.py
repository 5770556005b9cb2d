"""Dense row reduction: rank and nullspace vectors.

Everything here works on small, well-scaled float matrices. Pivoting is
partial (largest magnitude in the column) and the zero threshold is
relative to the largest entry of the input.
"""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidInputError

DEFAULT_TOL = 1e-9


def _as_matrix(A) -> np.ndarray:
    A = np.array(A, dtype=float, copy=True)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise InvalidInputError(f"expected a 2-d matrix, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("matrix has non-finite entries")
    return A


def rref(A, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form and the list of pivot columns."""
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    R = _as_matrix(A)
    rows, cols = R.shape
    scale = np.abs(R).max() if R.size else 0.0
    if scale == 0.0:
        return np.zeros_like(R), []
    thresh = tol * scale
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        k = r + int(np.argmax(np.abs(R[r:, c])))
        if abs(R[k, c]) <= thresh:
            R[r:, c] = 0.0
            continue
        if k != r:
            R[[r, k]] = R[[k, r]]
        R[r] /= R[r, c]
        others = np.arange(rows) != r
        R[others] -= np.outer(R[others, c], R[r])
        R[others, c] = 0.0
        pivots.append(c)
        r += 1
    return R, pivots


def rank(A, tol: float = DEFAULT_TOL) -> int:
    """Numerical rank via elimination with partial pivoting."""
    _, pivots = rref(A, tol)
    return len(pivots)


def nullspace_basis(A, tol: float = DEFAULT_TOL) -> list[np.ndarray]:
    """One nullspace vector per free column, in column order.

    Each vector is scaled to unit max-norm.
    """
    R, pivots = rref(A, tol)
    cols = R.shape[1]
    if cols == 0:
        raise InvalidInputError("matrix must have at least one column")
    pivot_set = set(pivots)
    basis = []
    for f in range(cols):
        if f in pivot_set:
            continue
        r = np.zeros(cols)
        r[f] = 1.0
        for row, pc in enumerate(pivots):
            r[pc] = -R[row, f]
        basis.append(r / np.abs(r).max())
    return basis


def nullspace_vector(A, tol: float = DEFAULT_TOL, which: int = 0) -> np.ndarray | None:
    """A nonzero ``r`` with ``A @ r ~ 0`` and ``max|r| = 1``, or None.

    ``which`` selects the free column (in order) used to build the vector;
    the default picks the first one.  None means ``A`` has full column
    rank at this tolerance.
    """
    basis = nullspace_basis(A, tol)
    if which >= len(basis):
        return None
    return basis[which]

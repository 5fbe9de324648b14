"""Dense problems backed by explicit matrices and LU solves."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from ..core import NepvProblem, SolveFailed

__all__ = ["DenseProblem", "LinearProblem", "build_linear", "dense_shifted_solve"]


def dense_shifted_solve(M, sigma, rhs):
    """Solve ``(M - sigma I) x = rhs`` by LU with partial pivoting.

    Only an exactly zero pivot or a non-finite result counts as failure; a
    nearly singular system (shift on top of an eigenvalue) is solved anyway,
    which is what inverse iteration relies on.
    """
    S = M - sigma * np.eye(M.shape[0])
    with warnings.catch_warnings():
        # the zero-pivot case is reported below as SolveFailed
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(S, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() == 0.0:
        raise SolveFailed("exactly singular shifted matrix", sigma=sigma, diagnostic=0.0)
    x = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise SolveFailed(
            "non-finite solution of shifted system",
            sigma=sigma,
            diagnostic=float(pivots.min() / pivots.max()),
        )
    return x


class DenseProblem(NepvProblem):
    """Problem defined by callables returning dense ``A(v)`` and ``J(v)``."""

    def __init__(self, dim, matrix_A, matrix_J):
        self.dim = int(dim)
        self._A = matrix_A
        self._J = matrix_J

    def matrix_A(self, v):
        return self._A(np.asarray(v, dtype=float))

    def matrix_J(self, v):
        return self._J(np.asarray(v, dtype=float))

    def apply_A(self, v, x):
        return self.matrix_A(v) @ x

    def apply_J(self, v, x):
        return self.matrix_J(v) @ x

    def solve_shifted(self, v, sigma, rhs):
        return dense_shifted_solve(self.matrix_J(v), sigma, rhs)

    def solve_shifted_A(self, v, sigma, rhs):
        return dense_shifted_solve(self.matrix_A(v), sigma, rhs)


class LinearProblem(DenseProblem):
    """Constant symmetric matrix; ``J = A`` and the iteration is classical."""

    def __init__(self, matrix):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("linear problem needs a square matrix")
        if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-14 * max(1.0, np.abs(matrix).max())):
            raise ValueError("linear problem needs a symmetric matrix")
        matrix.setflags(write=False)
        self.matrix = matrix
        super().__init__(matrix.shape[0], lambda v: matrix, lambda v: matrix)


def build_linear(diagonal=None, matrix=None):
    """Linear problem from a diagonal (``diag(1, 2, 3)``) or a full matrix."""
    if (diagonal is None) == (matrix is None):
        raise ValueError("give exactly one of diagonal or matrix")
    if diagonal is not None:
        matrix = np.diag(np.asarray(diagonal, dtype=float))
    problem = LinearProblem(matrix)
    if problem.dim < 2:
        raise ValueError("problem dimension must be at least 2")
    return problem

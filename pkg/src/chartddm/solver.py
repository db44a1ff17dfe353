"""Conjugate gradients with relative-residual stopping and warm starts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _backend
from .assembly import as_operator
from .errors import NumericDomainError


@dataclass(frozen=True)
class CGReport:
    iterations: int
    final_relative_residual: float
    converged: bool


def _csr(A):
    if not (sp.isspmatrix_csr(A) and A.indices.dtype == np.int32 and A.indptr.dtype == np.int32):
        A = as_operator(A)
    return A


def spmv(A: sp.csr_matrix, x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (A.shape[1],):
        raise ValueError(f"vector of length {x.shape} does not match operator {A.shape}")
    A = _csr(A)
    return _backend.kernels.csr_matvec(A.indptr, A.indices, A.data, x)


def cg_solve(A: sp.csr_matrix, rhs, x0=None, tol: float = 1e-8, max_iter: int | None = None,
             jacobi: bool = False) -> tuple[np.ndarray, CGReport]:
    """Solve ``A x = rhs`` for SPD ``A``.

    Stops when ``||A x - rhs|| / ||rhs|| <= tol``.  If ``x0`` already
    satisfies that, it is returned untouched with zero iterations.  A zero
    right-hand side returns the zero vector.  ``max_iter`` defaults to ten
    times the number of unknowns.
    """
    A = _csr(A)
    n = A.shape[0]
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    if rhs.shape != (n,):
        raise ValueError(f"rhs of length {rhs.shape} does not match operator {A.shape}")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (n,):
        raise ValueError("x0 does not match operator size")
    if not (np.all(np.isfinite(rhs)) and np.all(np.isfinite(x))):
        raise NumericDomainError("non-finite right-hand side or initial guess")
    if max_iter is None:
        max_iter = 10 * n
    dinv = None
    if jacobi:
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise NumericDomainError("Jacobi preconditioner needs a positive diagonal")
        dinv = 1.0 / diag
    iters, relres, status = _backend.kernels.cg(
        A.indptr, A.indices, A.data, rhs, x, float(tol), int(max_iter), dinv
    )
    if status == 2:
        raise NumericDomainError(
            f"CG broke down after {iters} iterations (non-finite or non-positive curvature)"
        )
    return x, CGReport(int(iters), float(relres), status == 0)

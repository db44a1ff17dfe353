"""NumPy twins of the compiled kernels in ``_kernels.pyx``.

Arithmetic is ordered identically: CSR rows accumulate left to right in
double precision, reductions accumulate sequentially in ``long double``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def csr_matvec(indptr, indices, data, x):
    n = len(indptr) - 1
    A = sp.csr_matrix((data, indices, indptr), shape=(n, len(x)))
    return A @ np.asarray(x, dtype=np.float64)


def dot(x, y) -> float:
    # numpy's long double dot is a plain sequential loop
    return float(np.dot(np.asarray(x, dtype=np.longdouble),
                        np.asarray(y, dtype=np.longdouble)))


def cg(indptr, indices, data, b, x, tol, max_iter, dinv=None):
    n = len(b)
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    b = np.asarray(b, dtype=np.float64)

    bnorm = np.sqrt(dot(b, b))
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0, 0
    thresh = tol * bnorm

    r = b - A @ x
    rnorm = np.sqrt(dot(r, r))
    if not np.isfinite(rnorm):
        return 0, rnorm / bnorm, 2
    if rnorm <= thresh:
        return 0, rnorm / bnorm, 0

    def apply_pc(res):
        return dinv * res if dinv is not None else res

    z = apply_pc(r)
    p = z.copy()
    rz = dot(r, z)
    it = 0
    status = 1
    while it < max_iter:
        ap = A @ p
        pap = dot(p, ap)
        if not np.isfinite(pap) or pap <= 0.0:
            status = 2
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        it += 1
        rnorm = np.sqrt(dot(r, r))
        if not np.isfinite(rnorm):
            status = 2
            break
        if rnorm <= thresh:
            r = b - A @ x
            rnorm = np.sqrt(dot(r, r))
            if rnorm <= thresh:
                status = 0
                break
            z = apply_pc(r)
            p = z.copy()
            rz = dot(r, z)
            continue
        z = apply_pc(r)
        rz_new = dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        p *= beta
        p += z
    return it, float(rnorm / bnorm), status


def scatter_stencil(stencil, local, base, vertex_offset, stencil_index):
    nb = local.shape[1]
    for a in range(nb):
        rows = base + vertex_offset[a]
        for b in range(nb):
            stencil[rows, stencil_index[a, b]] += local[:, a, b]

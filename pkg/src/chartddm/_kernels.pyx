# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for sparse products, reductions, CG and stencil scatter.

Every routine here has a NumPy twin in :mod:`chartddm._pykernels` that
performs the same floating-point operations in the same order, so both
backends agree bit-for-bit (the extension is built with
``-ffp-contract=off`` to keep FMA contraction out of the picture).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite

cnp.import_array()


cdef inline void _matvec(const int[::1] indptr, const int[::1] indices,
                         const double[::1] data, const double[::1] x,
                         double[::1] y) noexcept nogil:
    cdef Py_ssize_t i, jj, n = y.shape[0]
    cdef double s
    for i in range(n):
        s = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            s += data[jj] * x[indices[jj]]
        y[i] = s


cdef inline double _dot(const double[::1] x, const double[::1] y) noexcept nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef long double s = 0.0
    for i in range(n):
        s += <long double>x[i] * <long double>y[i]
    return <double>s


def csr_matvec(const int[::1] indptr, const int[::1] indices,
               const double[::1] data, const double[::1] x):
    y = np.empty(indptr.shape[0] - 1, dtype=np.float64)
    cdef double[::1] yv = y
    with nogil:
        _matvec(indptr, indices, data, x, yv)
    return y


def dot(const double[::1] x, const double[::1] y):
    cdef double s
    with nogil:
        s = _dot(x, y)
    return s


cdef int _cg(const int[::1] indptr, const int[::1] indices,
             const double[::1] data, const double[::1] b, double[::1] x,
             double tol, Py_ssize_t max_iter, bint precond,
             const double[::1] dv, double[::1] r, double[::1] z,
             double[::1] p, double[::1] ap,
             Py_ssize_t* iters, double* relres) noexcept nogil:
    cdef Py_ssize_t n = b.shape[0], i, it = 0
    cdef double bnorm, rnorm, rz, rz_new, pap, alpha, beta, thresh
    cdef int status = 1

    iters[0] = 0
    bnorm = sqrt(_dot(b, b))
    if bnorm == 0.0:
        for i in range(n):
            x[i] = 0.0
        relres[0] = 0.0
        return 0
    thresh = tol * bnorm

    _matvec(indptr, indices, data, x, ap)
    for i in range(n):
        r[i] = b[i] - ap[i]
    rnorm = sqrt(_dot(r, r))
    relres[0] = rnorm / bnorm
    if not isfinite(rnorm):
        return 2
    if rnorm <= thresh:
        return 0

    if precond:
        for i in range(n):
            z[i] = dv[i] * r[i]
    for i in range(n):
        p[i] = z[i]
    rz = _dot(r, z)

    while it < max_iter:
        _matvec(indptr, indices, data, p, ap)
        pap = _dot(p, ap)
        if not isfinite(pap) or pap <= 0.0:
            status = 2
            break
        alpha = rz / pap
        for i in range(n):
            x[i] += alpha * p[i]
        for i in range(n):
            r[i] -= alpha * ap[i]
        it += 1
        rnorm = sqrt(_dot(r, r))
        if not isfinite(rnorm):
            status = 2
            break
        if rnorm <= thresh:
            # confirm against the true residual; restart if it drifted
            _matvec(indptr, indices, data, x, ap)
            for i in range(n):
                r[i] = b[i] - ap[i]
            rnorm = sqrt(_dot(r, r))
            if rnorm <= thresh:
                status = 0
                break
            if precond:
                for i in range(n):
                    z[i] = dv[i] * r[i]
            for i in range(n):
                p[i] = z[i]
            rz = _dot(r, z)
            continue
        if precond:
            for i in range(n):
                z[i] = dv[i] * r[i]
        rz_new = _dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            p[i] = z[i] + beta * p[i]

    iters[0] = it
    relres[0] = rnorm / bnorm
    return status


def cg(const int[::1] indptr, const int[::1] indices, const double[::1] data,
       const double[::1] b, double[::1] x, double tol, Py_ssize_t max_iter,
       dinv=None):
    """Run (Jacobi-preconditioned) CG in place on ``x``.

    Returns ``(iterations, relative_residual, status)`` where status is
    0 for converged, 1 for max_iter reached and 2 for a non-finite value.
    """
    cdef Py_ssize_t n = b.shape[0]
    cdef bint precond = dinv is not None
    cdef double[::1] dv
    cdef double[::1] r = np.empty(n)
    cdef double[::1] z
    cdef double[::1] p = np.empty(n)
    cdef double[::1] ap = np.empty(n)
    cdef Py_ssize_t iters = 0
    cdef double relres = 0.0
    cdef int status

    if precond:
        dv = np.ascontiguousarray(dinv, dtype=np.float64)
        z = np.empty(n)
    else:
        dv = np.empty(0)
        z = r
    with nogil:
        status = _cg(indptr, indices, data, b, x, tol, max_iter, precond,
                     dv, r, z, p, ap, &iters, &relres)
    return iters, relres, status


def scatter_stencil(double[:, ::1] stencil, const double[:, :, ::1] local,
                    const long[::1] base, const long[::1] vertex_offset,
                    const long[:, ::1] stencil_index):
    """Accumulate cell matrices into per-node stencil rows.

    Loop order is (a, b) outer and cells inner, matching the NumPy path.
    """
    cdef Py_ssize_t nc = local.shape[0], nb = local.shape[1]
    cdef Py_ssize_t a, bb, c, s
    cdef long off
    with nogil:
        for a in range(nb):
            off = vertex_offset[a]
            for bb in range(nb):
                s = stencil_index[a, bb]
                for c in range(nc):
                    stencil[base[c] + off, s] += local[c, a, bb]

# cython: boundscheck=False, wraparound=False, cdivision=True
# Compiled twin of _kernels_py: identical signatures and buffer contracts.
# Kernels never allocate; all buffers come from the caller so that
# workspace accounting does not depend on the backend.

from libc.math cimport exp, isfinite, sqrt

from scipy.linalg.cython_blas cimport dgemv

QUADRATIC, PSEUDO_HUBER, HUBER, WELSCH, TRUNC_QUAD = range(5)

cdef int _QUAD = 0, _PHUB = 1, _HUB = 2, _WELS = 3, _TRUNC = 4


cdef inline double _phi(int family, double alpha, double z) noexcept nogil:
    if family == _QUAD:
        return 0.5 * z * z
    elif family == _PHUB:
        return alpha * alpha * (sqrt(1.0 + (z / alpha) * (z / alpha)) - 1.0)
    elif family == _HUB:
        if z <= alpha:
            return 0.5 * z * z
        return alpha * (z - 0.5 * alpha)
    elif family == _WELS:
        return 1.0 - exp(-0.5 * z * z / (alpha * alpha))
    else:
        if z <= alpha:
            return 0.5 * z * z
        return 0.5 * alpha * alpha


cdef inline double _kappa1(int family, double alpha, double z) noexcept nogil:
    if family == _QUAD:
        return 1.0
    elif family == _PHUB:
        return 1.0 / sqrt(1.0 + (z / alpha) * (z / alpha))
    elif family == _HUB:
        if z <= alpha:
            return 1.0
        return alpha / z
    elif family == _WELS:
        return exp(-0.5 * z * z / (alpha * alpha)) / (alpha * alpha)
    else:
        return 1.0 if z <= alpha else 0.0


cdef inline double _kappa2(int family, double alpha, double z) noexcept nogil:
    cdef double w
    if family == _QUAD or family == _TRUNC:
        return 0.0
    elif family == _PHUB:
        w = 1.0 + (z / alpha) * (z / alpha)
        return -1.0 / (alpha * alpha * w * sqrt(w))
    elif family == _HUB:
        if z <= alpha:
            return 0.0
        return -alpha / (z * z * z)
    else:
        return -exp(-0.5 * z * z / (alpha * alpha)) / (alpha * alpha * alpha * alpha)


def row_norms_shifted(double[:, ::1] a, double eps, double[::1] out):
    cdef Py_ssize_t m = a.shape[0], n = a.shape[1], i, j
    for j in range(n):
        out[j] = 0.0
    for i in range(m):
        for j in range(n):
            out[j] += a[i, j] * a[i, j]
    for j in range(n):
        out[j] = sqrt(out[j]) + eps


def phi_kernel(int family, double alpha, double[::1] z, double[::1] out):
    cdef Py_ssize_t j
    for j in range(z.shape[0]):
        out[j] = _phi(family, alpha, z[j])


def kappa1_kernel(int family, double alpha, double[::1] z, double[::1] out):
    cdef Py_ssize_t j
    for j in range(z.shape[0]):
        out[j] = _kappa1(family, alpha, z[j])


def kappa_kernel(int family, double alpha, double[::1] z,
                 double[::1] k1, double[::1] k2):
    cdef Py_ssize_t j
    for j in range(z.shape[0]):
        k1[j] = _kappa1(family, alpha, z[j])
        k2[j] = _kappa2(family, alpha, z[j])


def pool_objective_gradient(double[:, ::1] x, double[::1] u, int family,
                            double alpha, double[::1] grad,
                            double[:, ::1] diffs, double[::1] z,
                            double[::1] scratch):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], i, j
    cdef double d, ui, zj, acc, value = 0.0
    for j in range(n):
        z[j] = 0.0
    for i in range(m):
        ui = u[i]
        for j in range(n):
            d = ui - x[i, j]
            diffs[i, j] = d
            z[j] += d * d
    for j in range(n):
        zj = sqrt(z[j])
        z[j] = zj
        value += _phi(family, alpha, zj)
        scratch[j] = _kappa1(family, alpha, zj)
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += diffs[i, j] * scratch[j]
        grad[i] = acc
    return value


def pool_fast_finish(double[:, ::1] ydx, double[::1] scaled_v, double[::1] k1):
    cdef Py_ssize_t m = ydx.shape[0], n = ydx.shape[1], i, j
    for i in range(m):
        for j in range(n):
            ydx[i, j] = k1[j] * scaled_v[i]


def pool_finish(double[:, ::1] ydx, double[::1] w, double[::1] k1,
                double[::1] u):
    cdef Py_ssize_t m = ydx.shape[0], n = ydx.shape[1], i, j
    cdef double wi
    for i in range(m):
        wi = w[i]
        for j in range(n):
            ydx[i, j] = k1[j] * wi + u[j] * ydx[i, j]


cdef inline void _matvec(double[:, ::1] K, double[::1] x, double[::1] y,
                         bint transpose) noexcept nogil:
    # Row-major K(m, n) is the column-major transpose, hence flipped trans.
    cdef int m = <int> K.shape[0], n = <int> K.shape[1]
    cdef int inc = 1
    cdef double one = 1.0, zero = 0.0
    if transpose:
        dgemv("N", &n, &m, &one, &K[0, 0], &n, &x[0], &inc, &zero, &y[0], &inc)
    else:
        dgemv("T", &n, &m, &one, &K[0, 0], &n, &x[0], &inc, &zero, &y[0], &inc)


cdef inline bint _positive_finite(double[::1] a) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        if not isfinite(a[i]) or a[i] <= 0.0:
            return 0
    return 1


cdef inline bint _all_finite(double[::1] a) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        if not isfinite(a[i]):
            return 0
    return 1


def sinkhorn_linear(double[:, ::1] K, double[::1] r, double[::1] c,
                    double[::1] u, double[::1] v, double[::1] Kv,
                    double[::1] KTu, double tol, long max_iter):
    cdef Py_ssize_t m = K.shape[0], n = K.shape[1], i
    cdef long it
    cdef double residual = float("inf"), err
    _matvec(K, v, Kv, 0)
    for it in range(1, max_iter + 1):
        if not _positive_finite(Kv):
            return it - 1, residual, 2
        for i in range(m):
            u[i] = r[i] / Kv[i]
        _matvec(K, u, KTu, 1)
        if not _positive_finite(KTu):
            return it - 1, residual, 2
        for i in range(n):
            v[i] = c[i] / KTu[i]
        if not _all_finite(u) or not _all_finite(v):
            return it - 1, residual, 2
        _matvec(K, v, Kv, 0)
        residual = 0.0
        for i in range(m):
            err = u[i] * Kv[i] - r[i]
            if err < 0.0:
                err = -err
            if err > residual:
                residual = err
        if residual <= tol:
            return it, residual, 0
    return max_iter, residual, 1


def ot_subtract_rank_updates(double[:, ::1] t, double[::1] v1,
                             double[::1] v2, double[:, ::1] P):
    cdef Py_ssize_t m = t.shape[0], n = t.shape[1], i, j
    cdef double vi
    for j in range(n):
        t[0, j] -= v2[j] * P[0, j]
    for i in range(1, m):
        vi = v1[i - 1]
        for j in range(n):
            t[i, j] -= (vi + v2[j]) * P[i, j]

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled particle-grid kernels.

All grids are C-ordered (n, n, n) float64 arrays with node i at lo + i*h on
each axis.  The smearing density is passed as coefficient tables of the
scaled variable u = 2 r / eps (see kernel.RegularizationKernel.tables).
"""
import numpy as np
from libc.math cimport sqrt, ceil, floor


cdef inline double _horner(const double[::1] c, double u) noexcept nogil:
    cdef Py_ssize_t k = c.shape[0] - 1
    cdef double acc = c[k]
    while k > 0:
        k -= 1
        acc = acc * u + c[k]
    return acc


cdef inline void _span(double q, double eps, double lo, double h, Py_ssize_t n,
                       Py_ssize_t* a, Py_ssize_t* b) noexcept nogil:
    a[0] = <Py_ssize_t> ceil((q - eps - lo) / h)
    b[0] = <Py_ssize_t> floor((q + eps - lo) / h)
    if a[0] < 0:
        a[0] = 0
    if b[0] > n - 1:
        b[0] = n - 1


def deposit(const double[:, ::1] q, const double[::1] w, double[:, :, ::1] out,
            double lo, double h, double eps, const double[::1] cval):
    """out += sum_i w_i rho(x - q_i)."""
    cdef Py_ssize_t n = out.shape[0], N = q.shape[0]
    cdef Py_ssize_t p, i, j, k, i0, i1, j0, j1, k0, k1
    cdef double s = 2.0 / eps, e2 = eps * eps
    cdef double dx, dy, dz, r2, u, t, t2, t4, wi
    with nogil:
        for p in range(N):
            wi = w[p]
            _span(q[p, 0], eps, lo, h, n, &i0, &i1)
            _span(q[p, 1], eps, lo, h, n, &j0, &j1)
            _span(q[p, 2], eps, lo, h, n, &k0, &k1)
            for i in range(i0, i1 + 1):
                dx = lo + i * h - q[p, 0]
                for j in range(j0, j1 + 1):
                    dy = lo + j * h - q[p, 1]
                    for k in range(k0, k1 + 1):
                        dz = lo + k * h - q[p, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 >= e2:
                            continue
                        u = sqrt(r2) * s
                        t = 2.0 - u
                        t2 = t * t
                        t4 = t2 * t2
                        out[i, j, k] += wi * t4 * t4 * t2 * _horner(cval, u)


def deposit_dipole(const double[:, ::1] q, const double[:, ::1] a, double[:, :, ::1] out,
                   double lo, double h, double eps, const double[::1] cgrad):
    """out += sum_i grad rho(x - q_i) . a_i."""
    cdef Py_ssize_t n = out.shape[0], N = q.shape[0]
    cdef Py_ssize_t p, i, j, k, i0, i1, j0, j1, k0, k1
    cdef double s = 2.0 / eps, e2 = eps * eps
    cdef double dx, dy, dz, r2, u, t, t3, t9, g
    with nogil:
        for p in range(N):
            _span(q[p, 0], eps, lo, h, n, &i0, &i1)
            _span(q[p, 1], eps, lo, h, n, &j0, &j1)
            _span(q[p, 2], eps, lo, h, n, &k0, &k1)
            for i in range(i0, i1 + 1):
                dx = lo + i * h - q[p, 0]
                for j in range(j0, j1 + 1):
                    dy = lo + j * h - q[p, 1]
                    for k in range(k0, k1 + 1):
                        dz = lo + k * h - q[p, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 >= e2:
                            continue
                        u = sqrt(r2) * s
                        t = 2.0 - u
                        t3 = t * t * t
                        t9 = t3 * t3 * t3
                        g = t9 * _horner(cgrad, u)
                        out[i, j, k] += g * (dx * a[p, 0] + dy * a[p, 1] + dz * a[p, 2])


def gather_value(const double[:, ::1] q, const double[:, :, ::1] g,
                 double lo, double h, double eps, const double[::1] cval):
    """sum_x rho(x - q_i) g(x) for every particle (no volume factor)."""
    cdef Py_ssize_t n = g.shape[0], N = q.shape[0]
    cdef Py_ssize_t p, i, j, k, i0, i1, j0, j1, k0, k1
    cdef double s = 2.0 / eps, e2 = eps * eps
    cdef double dx, dy, dz, r2, u, t, t2, t4, acc
    res = np.zeros(N)
    cdef double[::1] r = res
    with nogil:
        for p in range(N):
            acc = 0.0
            _span(q[p, 0], eps, lo, h, n, &i0, &i1)
            _span(q[p, 1], eps, lo, h, n, &j0, &j1)
            _span(q[p, 2], eps, lo, h, n, &k0, &k1)
            for i in range(i0, i1 + 1):
                dx = lo + i * h - q[p, 0]
                for j in range(j0, j1 + 1):
                    dy = lo + j * h - q[p, 1]
                    for k in range(k0, k1 + 1):
                        dz = lo + k * h - q[p, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 >= e2:
                            continue
                        u = sqrt(r2) * s
                        t = 2.0 - u
                        t2 = t * t
                        t4 = t2 * t2
                        acc += t4 * t4 * t2 * _horner(cval, u) * g[i, j, k]
            r[p] = acc
    return res


def gather_grad(const double[:, ::1] q, const double[:, :, ::1] g,
                double lo, double h, double eps, const double[::1] cgrad):
    """sum_x grad rho(x - q_i) g(x) for every particle (no volume factor)."""
    cdef Py_ssize_t n = g.shape[0], N = q.shape[0]
    cdef Py_ssize_t p, i, j, k, i0, i1, j0, j1, k0, k1
    cdef double s = 2.0 / eps, e2 = eps * eps
    cdef double dx, dy, dz, r2, u, t, t3, c, ax, ay, az
    res = np.zeros((N, 3))
    cdef double[:, ::1] r = res
    with nogil:
        for p in range(N):
            ax = 0.0
            ay = 0.0
            az = 0.0
            _span(q[p, 0], eps, lo, h, n, &i0, &i1)
            _span(q[p, 1], eps, lo, h, n, &j0, &j1)
            _span(q[p, 2], eps, lo, h, n, &k0, &k1)
            for i in range(i0, i1 + 1):
                dx = lo + i * h - q[p, 0]
                for j in range(j0, j1 + 1):
                    dy = lo + j * h - q[p, 1]
                    for k in range(k0, k1 + 1):
                        dz = lo + k * h - q[p, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 >= e2:
                            continue
                        u = sqrt(r2) * s
                        t = 2.0 - u
                        t3 = t * t * t
                        c = t3 * t3 * t3 * _horner(cgrad, u) * g[i, j, k]
                        ax += c * dx
                        ay += c * dy
                        az += c * dz
            r[p, 0] = ax
            r[p, 1] = ay
            r[p, 2] = az
    return res


def gather_hess(const double[:, ::1] q, const double[:, :, ::1] g,
                double lo, double h, double eps, const double[::1] cgrad,
                const double[::1] chess):
    """sum_x Hess rho(x - q_i) g(x), shape (N, 3, 3), no volume factor."""
    cdef Py_ssize_t n = g.shape[0], N = q.shape[0]
    cdef Py_ssize_t p, i, j, k, i0, i1, j0, j1, k0, k1
    cdef double s = 2.0 / eps, e2 = eps * eps
    cdef double dx, dy, dz, r2, u, t, t2, t4, t8, a, b, gv
    cdef double hxx, hyy, hzz, hxy, hxz, hyz
    res = np.zeros((N, 3, 3))
    cdef double[:, :, ::1] r = res
    with nogil:
        for p in range(N):
            hxx = 0.0
            hyy = 0.0
            hzz = 0.0
            hxy = 0.0
            hxz = 0.0
            hyz = 0.0
            _span(q[p, 0], eps, lo, h, n, &i0, &i1)
            _span(q[p, 1], eps, lo, h, n, &j0, &j1)
            _span(q[p, 2], eps, lo, h, n, &k0, &k1)
            for i in range(i0, i1 + 1):
                dx = lo + i * h - q[p, 0]
                for j in range(j0, j1 + 1):
                    dy = lo + j * h - q[p, 1]
                    for k in range(k0, k1 + 1):
                        dz = lo + k * h - q[p, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 >= e2:
                            continue
                        u = sqrt(r2) * s
                        t = 2.0 - u
                        t2 = t * t
                        t4 = t2 * t2
                        t8 = t4 * t4
                        gv = g[i, j, k]
                        a = t8 * t * _horner(cgrad, u) * gv
                        b = t8 * _horner(chess, u) * gv
                        hxx += a + b * dx * dx
                        hyy += a + b * dy * dy
                        hzz += a + b * dz * dz
                        hxy += b * dx * dy
                        hxz += b * dx * dz
                        hyz += b * dy * dz
            r[p, 0, 0] = hxx
            r[p, 1, 1] = hyy
            r[p, 2, 2] = hzz
            r[p, 0, 1] = hxy
            r[p, 1, 0] = hxy
            r[p, 0, 2] = hxz
            r[p, 2, 0] = hxz
            r[p, 1, 2] = hyz
            r[p, 2, 1] = hyz
    return res


def laplacian(const double[:, :, ::1] f, double[:, :, ::1] out, double h,
              const double[::1] stencil):
    """Sum over axes of a symmetric 1-d second-difference stencil.

    stencil[0] is the centre weight, stencil[m] the weight at offset +-m (in
    units of 1/h^2).  Nodes within m of the frame get out = 0.
    """
    cdef Py_ssize_t n = f.shape[0], m = stencil.shape[0] - 1
    cdef Py_ssize_t i, j, k, a
    cdef double c = 1.0 / (h * h), c0 = 3.0 * stencil[0], acc
    with nogil:
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if i < m or j < m or k < m or i >= n - m or j >= n - m or k >= n - m:
                        out[i, j, k] = 0.0
                        continue
                    acc = c0 * f[i, j, k]
                    for a in range(1, m + 1):
                        acc = acc + stencil[a] * (f[i + a, j, k] + f[i - a, j, k] + f[i, j + a, k]
                                                  + f[i, j - a, k] + f[i, j, k + a] + f[i, j, k - a])
                    out[i, j, k] = c * acc


def coulomb_direct(const double[:, ::1] q, const double[::1] w, double[:, :, ::1] out,
                   double lo, double h, double eps, const double[::1] cm,
                   const double[::1] ck):
    """out += sum_i w_i psi_rho(|x - q_i|) at every node."""
    cdef Py_ssize_t n = out.shape[0], N = q.shape[0]
    cdef Py_ssize_t p, i, j, k
    cdef double s = 2.0 / eps, e2 = eps * eps
    cdef double pi4 = 4.0 * 3.141592653589793
    cdef double dx, dy, dz, r2, r, u, wi
    with nogil:
        for p in range(N):
            wi = w[p]
            for i in range(n):
                dx = lo + i * h - q[p, 0]
                for j in range(n):
                    dy = lo + j * h - q[p, 1]
                    for k in range(n):
                        dz = lo + k * h - q[p, 2]
                        r2 = dx * dx + dy * dy + dz * dz
                        if r2 >= e2:
                            out[i, j, k] -= wi / (pi4 * sqrt(r2))
                        elif r2 > 0.0:
                            u = sqrt(r2) * s
                            out[i, j, k] -= wi * s * (_horner(cm, u) / (pi4 * u) + _horner(ck, u))
                        else:
                            out[i, j, k] -= wi * s * _horner(ck, 0.0)

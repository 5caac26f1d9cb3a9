"""Pure numpy versions of the compiled kernels in _core.pyx (same signatures)."""
from __future__ import annotations

import numpy as np

_PI4 = 4.0 * np.pi


def _poly(c, u):
    return np.polynomial.polynomial.polyval(u, c)


def _local(qp, eps, lo, h, n):
    a = np.clip(np.ceil((qp - eps - lo) / h).astype(int), 0, n - 1)
    b = np.clip(np.floor((qp + eps - lo) / h).astype(int), 0, n - 1)
    ax = [np.arange(a[d], b[d] + 1) for d in range(3)]
    dx = [lo + ax[d] * h - qp[d] for d in range(3)]
    D = np.meshgrid(*dx, indexing="ij")
    r2 = D[0] ** 2 + D[1] ** 2 + D[2] ** 2
    inside = r2 < eps * eps
    sl = tuple(slice(ax[d][0], ax[d][-1] + 1) for d in range(3))
    u = np.sqrt(np.where(inside, r2, 0.0)) * (2.0 / eps)
    return sl, D, u, inside


def deposit(q, w, out, lo, h, eps, cval):
    n = out.shape[0]
    for p in range(q.shape[0]):
        sl, _, u, inside = _local(q[p], eps, lo, h, n)
        t = 2.0 - u
        out[sl] += np.where(inside, w[p] * t ** 10 * _poly(cval, u), 0.0)


def deposit_dipole(q, a, out, lo, h, eps, cgrad):
    n = out.shape[0]
    for p in range(q.shape[0]):
        sl, D, u, inside = _local(q[p], eps, lo, h, n)
        g = np.where(inside, (2.0 - u) ** 9 * _poly(cgrad, u), 0.0)
        out[sl] += g * (D[0] * a[p, 0] + D[1] * a[p, 1] + D[2] * a[p, 2])


def gather_value(q, g, lo, h, eps, cval):
    n = g.shape[0]
    res = np.zeros(q.shape[0])
    for p in range(q.shape[0]):
        sl, _, u, inside = _local(q[p], eps, lo, h, n)
        k = np.where(inside, (2.0 - u) ** 10 * _poly(cval, u), 0.0)
        res[p] = np.sum(k * g[sl])
    return res


def gather_grad(q, g, lo, h, eps, cgrad):
    n = g.shape[0]
    res = np.zeros((q.shape[0], 3))
    for p in range(q.shape[0]):
        sl, D, u, inside = _local(q[p], eps, lo, h, n)
        c = np.where(inside, (2.0 - u) ** 9 * _poly(cgrad, u), 0.0) * g[sl]
        res[p] = [np.sum(c * D[d]) for d in range(3)]
    return res


def gather_hess(q, g, lo, h, eps, cgrad, chess):
    n = g.shape[0]
    res = np.zeros((q.shape[0], 3, 3))
    for p in range(q.shape[0]):
        sl, D, u, inside = _local(q[p], eps, lo, h, n)
        gv = g[sl]
        t = 2.0 - u
        a = np.where(inside, t ** 9 * _poly(cgrad, u), 0.0) * gv
        b = np.where(inside, t ** 8 * _poly(chess, u), 0.0) * gv
        sa = np.sum(a)
        for x in range(3):
            for y in range(x, 3):
                v = np.sum(b * D[x] * D[y]) + (sa if x == y else 0.0)
                res[p, x, y] = v
                res[p, y, x] = v
    return res


def laplacian(f, out, h, stencil):
    n = f.shape[0]
    m = len(stencil) - 1
    out[...] = 0.0
    inner = (slice(m, n - m),) * 3
    acc = 3.0 * stencil[0] * f[inner]
    for a in range(1, m + 1):
        for ax in range(3):
            for sgn in (a, -a):
                sl = [slice(m, n - m)] * 3
                sl[ax] = slice(m + sgn, n - m + sgn)
                acc = acc + stencil[a] * f[tuple(sl)]
    out[inner] = acc / (h * h)


def coulomb_direct(q, w, out, lo, h, eps, cm, ck):
    n = out.shape[0]
    x = lo + h * np.arange(n)
    s = 2.0 / eps
    for p in range(q.shape[0]):
        dx = (x - q[p, 0])[:, None, None]
        dy = (x - q[p, 1])[None, :, None]
        dz = (x - q[p, 2])[None, None, :]
        r = np.sqrt(dx * dx + dy * dy + dz * dz)
        u = np.minimum(r * s, 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            near = s * (np.where(u > 0, _poly(cm, u) / (_PI4 * np.where(u > 0, u, 1.0)), 0.0) + _poly(ck, u))
            far = 1.0 / (_PI4 * np.where(r > 0, r, 1.0))
        out -= w[p] * np.where(r >= eps, far, near)

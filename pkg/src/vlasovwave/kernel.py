"""Regularization density and the convolutions built on it.

The profile is rho = chi * chi with chi(x) = c (1 - |x|^2/(eps/2)^2)^4 on the
ball of radius eps/2.  In the scaled variable u = 2|x|/eps the self-convolution
is a single polynomial on [0, 2]:

    rho~(u) = 693 (2 - u)^10 Q(u) / (8805941248 pi),

with Q the degree-9 integer polynomial below.  Everything the dynamics needs
(gradient, Hessian, Coulomb potential) is derived from it with exact integer
polynomial arithmetic, so kernel evaluation involves no quadrature at all.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

PROFILE = "poly4-selfconv"

# Q(u), lowest degree first
_Q = [35840, 179200, 395520, 499200, 388032, 187200, 57680, 11200, 1260, 63]
_NORM = Fraction(693, 8805941248)  # divided by pi at evaluation time


def _pmul(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _padd(a, b):
    n = max(len(a), len(b))
    return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)]


def _pscale(a, c):
    return [c * x for x in a]


def _pder(a):
    return [i * a[i] for i in range(1, len(a))] or [0]


def _pshift_down(a, k):
    """Divide by u^k, asserting the low coefficients vanish."""
    if any(x != 0 for x in a[:k]):
        raise ArithmeticError("polynomial not divisible by u^%d" % k)
    return a[k:]


def _pint(a):
    return [Fraction(0)] + [Fraction(x) / (i + 1) for i, x in enumerate(a)]


_TWO_MINUS_U = [2, -1]


def _pow_tmu(k):
    out = [1]
    for _ in range(k):
        out = _pmul(out, _TWO_MINUS_U)
    return out


def _build_polys():
    Q = _Q
    dQ = _pder(Q)
    d2Q = _pder(dQ)
    tmu = _TWO_MINUS_U
    # rho~' = (2-u)^9 A(u),  A = -10 Q + (2-u) Q'
    A = _padd(_pscale(Q, -10), _pmul(tmu, dQ))
    A1 = _pshift_down(A, 1)  # rho~'/u = (2-u)^9 A1
    # rho~'' = (2-u)^8 B,  B = 90 Q - 20 (2-u) Q' + (2-u)^2 Q''
    B = _padd(_padd(_pscale(Q, 90), _pscale(_pmul(tmu, dQ), -20)), _pmul(_pmul(tmu, tmu), d2Q))
    # (rho~'' - rho~'/u)/u^2 = (2-u)^8 C2,  C2 = (B - (2-u) A1)/u^2
    C = _padd(B, _pscale(_pmul(tmu, A1), -1))
    C2 = _pshift_down(C, 2)
    # expanded rho~ (times pi / NORM)
    full = _pmul(_pow_tmu(10), Q)
    # enclosed mass m~(u) = 4 pi int_0^u v^2 rho~ dv  (pi cancels)
    m_poly = [4 * _NORM * x for x in _pint(_pmul([0, 0, 1], full))]
    # K(u) = int_u^2 v rho~ dv, times pi
    vrho = _pint(_pmul([0, 1], full))
    k_at_2 = sum(Fraction(c) * 2 ** i for i, c in enumerate(vrho))
    k_poly = [_NORM * (-x) for x in vrho]
    k_poly[0] += _NORM * k_at_2
    return dict(Q=Q, A1=A1, B=B, C2=C2, full=full, m=m_poly, k=k_poly)


_POLYS = _build_polys()


def _horner(coefs_low_first, u):
    c = np.asarray([float(x) for x in coefs_low_first])
    return np.polynomial.polynomial.polyval(u, c)


def _gl(n, a, b):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


@dataclass(frozen=True)
class KernelConstants:
    l2: float
    grad_l2: float
    hess_l2: float
    lip: float
    c_rho: float
    support_volume: float

    def as_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class RegularizationKernel:
    """Radial smearing density with support radius `radius`.

    `radial_nodes` is the order of the radial Gauss-Legendre rule used for
    the cached constants.  Convolutions with grid data are node sums over
    the footprint, the same quadrature the particle-grid kernels use.
    """

    radius: float = 1.0
    profile: str = PROFILE
    radial_nodes: int = 512

    def __post_init__(self):
        if self.profile != PROFILE:
            raise ValueError(f"unknown kernel profile {self.profile!r}")
        if not self.radius > 0:
            raise ValueError("kernel radius must be positive")

    # scaled radial profile and its derivatives ---------------------------
    @property
    def _s(self):
        return 2.0 / self.radius

    def radial(self, r):
        """rho(r) for scalar or array r >= 0."""
        u = np.minimum(np.asarray(r, dtype=float) * self._s, 2.0)
        val = (2.0 - u) ** 10 * _horner(_POLYS["Q"], u) * float(_NORM) / np.pi
        return self._s ** 3 * val

    def radial_d1(self, r):
        """d rho / dr."""
        u = np.minimum(np.asarray(r, dtype=float) * self._s, 2.0)
        a = (2.0 - u) ** 9 * u * _horner(_POLYS["A1"], u)
        return self._s ** 4 * a * float(_NORM) / np.pi

    def radial_d2(self, r):
        """d^2 rho / dr^2."""
        u = np.minimum(np.asarray(r, dtype=float) * self._s, 2.0)
        b = (2.0 - u) ** 8 * _horner(_POLYS["B"], u)
        return self._s ** 5 * b * float(_NORM) / np.pi

    def coulomb(self, r):
        """psi_rho(r) = -(1/4pi)(|.|^-1 * rho)(r), the ground-state potential."""
        r = np.asarray(r, dtype=float)
        u = r * self._s
        inner = np.minimum(u, 2.0)
        m = _horner(_POLYS["m"], inner)
        k = _horner(_POLYS["k"], inner) / np.pi
        with np.errstate(divide="ignore", invalid="ignore"):
            near = -self._s * (np.where(inner > 0, m / (4 * np.pi * np.where(inner > 0, inner, 1.0)), 0.0) + k)
            far = -1.0 / (4 * np.pi * np.where(r > 0, r, 1.0))
        return np.where(u < 2.0, near, far)

    def coulomb_d1(self, r):
        """d psi_rho / dr = m(r) / (4 pi r^2)."""
        r = np.asarray(r, dtype=float)
        u = np.minimum(r * self._s, 2.0)
        m = _horner(_POLYS["m"], u)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = m / (4 * np.pi * r ** 2)
        return np.where(r > 0, out, 0.0)

    def enclosed_mass(self, r):
        u = np.minimum(np.asarray(r, dtype=float) * self._s, 2.0)
        return _horner(_POLYS["m"], u)

    # coefficient tables for the compiled grid kernels ---------------------
    @cached_property
    def tables(self):
        """Float coefficient tables (lowest degree first) in the u variable."""
        n = float(_NORM) / np.pi
        s = self._s
        f = lambda p: np.ascontiguousarray([float(x) for x in p], dtype=np.float64)
        return dict(
            val=f(_POLYS["Q"]) * n * s ** 3,
            grad=f(_POLYS["A1"]) * n * s ** 5,
            hess_b=f(_POLYS["C2"]) * n * s ** 7,
            pot=f(_POLYS["m"]),
            pot_k=f(_POLYS["k"]) / np.pi,
        )

    def eval(self, x):
        """rho(x) for points x of shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        return self.radial(np.linalg.norm(x, axis=-1))

    def grad(self, x):
        """grad rho(x), shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        u = np.minimum(np.linalg.norm(x, axis=-1) * self._s, 2.0)
        g = (2.0 - u) ** 9 * _horner(_POLYS["A1"], u) * float(_NORM) / np.pi * self._s ** 5
        return g[..., None] * x

    def hessian(self, x):
        """Hessian of rho at x, shape (..., 3, 3)."""
        x = np.asarray(x, dtype=float)
        u = np.minimum(np.linalg.norm(x, axis=-1) * self._s, 2.0)
        n = float(_NORM) / np.pi
        a = (2.0 - u) ** 9 * _horner(_POLYS["A1"], u) * n * self._s ** 5
        b = (2.0 - u) ** 8 * _horner(_POLYS["C2"], u) * n * self._s ** 7
        eye = np.eye(3)
        return a[..., None, None] * eye + b[..., None, None] * x[..., :, None] * x[..., None, :]

    # constants ------------------------------------------------------------
    def _radial_quad(self):
        return _gl(self.radial_nodes, 0.0, self.radius)

    @cached_property
    def constants(self) -> KernelConstants:
        r, w = self._radial_quad()
        shell = 4 * np.pi * r ** 2 * w
        rho = self.radial(r)
        d1 = self.radial_d1(r)
        d2 = self.radial_d2(r)
        l2 = np.sqrt(np.sum(shell * rho ** 2))
        g2 = np.sqrt(np.sum(shell * d1 ** 2))
        # |Hess|_F^2 = rho''^2 + 2 (rho'/r)^2
        h2 = np.sqrt(np.sum(shell * (d2 ** 2 + 2 * (d1 / r) ** 2)))
        # Lipschitz seminorm: max |rho'| located by a fine scan, then polished
        from scipy.optimize import minimize_scalar

        grid = np.linspace(0, self.radius, 4001)
        i = int(np.argmax(np.abs(self.radial_d1(grid))))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        res = minimize_scalar(lambda s: -abs(float(self.radial_d1(s))), bounds=(lo, hi), method="bounded",
                              options=dict(xatol=1e-14))
        lip = float(max(-res.fun, abs(self.radial_d1(grid[i]))))
        vol = 4.0 / 3.0 * np.pi * self.radius ** 3
        return KernelConstants(float(l2), float(g2), float(h2), lip, float(np.sqrt(2 * vol) * lip), vol)

    def mass(self):
        r, w = self._radial_quad()
        return float(np.sum(4 * np.pi * r ** 2 * w * self.radial(r)))

    def self_energy(self):
        """(1/8pi) double integral rho rho / |x - y| = -1/2 int rho psi_rho."""
        r, w = self._radial_quad()
        return float(-0.5 * np.sum(4 * np.pi * r ** 2 * w * self.radial(r) * self.coulomb(r)))

    # point convolutions on grid data --------------------------------------
    def _local(self, grid, x):
        """Nodes of the footprint of rho(. - x): slice, offsets y - x, h^3 rho."""
        x = np.asarray(x, dtype=float)
        if x.shape != (3,):
            raise ValueError("expected a single 3-d point")
        grid.require_ball(x, self.radius)
        a = np.ceil((x - self.radius - grid.lo) / grid.h).astype(int)
        b = np.floor((x + self.radius - grid.lo) / grid.h).astype(int)
        sl = tuple(slice(a[d], b[d] + 1) for d in range(3))
        ax = [grid.x[sl[d]] - x[d] for d in range(3)]
        D = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)
        return sl, D, grid.cell_volume * self.eval(D)

    def convolve_scalar(self, grid, g, x):
        """(rho * g)(x) = int rho(y - x) g(y) dy by node quadrature."""
        sl, _, w = self._local(grid, x)
        return float(np.sum(w * g[sl]))

    def convolve_grad(self, grid, g, x):
        """(rho * grad g)(x) with grad g from centered differences at the nodes."""
        sl, _, w = self._local(grid, x)
        gr = grid.gradient(g)
        return np.array([np.sum(w * gr[a][sl]) for a in range(3)])

    def convolve_torque(self, grid, g, x):
        """int rho(y - x) (y - x) x grad g(y) dy; zero in exact arithmetic."""
        sl, D, w = self._local(grid, x)
        gr = grid.gradient(g)
        G = np.stack([gr[a][sl] for a in range(3)], axis=-1)
        return np.sum(w[..., None] * np.cross(D, G), axis=(0, 1, 2))


def kernel_eval(k: RegularizationKernel, x) -> float:
    return float(k.eval(np.asarray(x, dtype=float)))


def convolve_scalar(k, grid, g, x):
    return k.convolve_scalar(grid, g, x)


def convolve_grad(k, grid, g, x):
    return k.convolve_grad(grid, g, x)


def convolve_torque(k, grid, g, x):
    return k.convolve_torque(grid, g, x)


def kernel_constants(k: RegularizationKernel) -> KernelConstants:
    return k.constants


__all__ = [
    "RegularizationKernel",
    "KernelConstants",
    "kernel_eval",
    "convolve_scalar",
    "convolve_grad",
    "convolve_torque",
    "kernel_constants",
]

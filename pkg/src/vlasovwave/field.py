"""The wave pair (psi, varpi): grid leapfrog, energies and the Kirchhoff evaluator.

The grid field is stored as psi = psi_ref + phi, where psi_ref is a static
reference potential whose Laplacian rho_ref is known in closed form (the
smeared density it was generated from).  The leapfrog only ever applies the
discrete Laplacian to phi:

    d/dt varpi = L phi + rho_ref - source,     d/dt psi = varpi,

which is the wave equation with Delta psi_ref replaced by its exact value.
The box is sized so that phi and varpi vanish near the frame for the whole
run, which makes the Dirichlet frame (psi = psi_ref) invisible.  The field
energy uses the matching quadratic form

    E_W = S_ref - <phi, rho_ref> + 1/2 <phi, -L phi> + 1/2 <varpi, varpi>,

with S_ref = 1/2 int |grad psi_ref|^2 over all of R^3 (this includes the
energy of the static tail outside the box).  The ground state is therefore
reproduced to quadrature accuracy and the coupled scheme conserves a discrete
Hamiltonian.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from . import backend
from .errors import CFLViolation, HorizonError, SupportExceedsDomain
from .grid import Grid
from .kernel import RegularizationKernel

SNAPSHOT_ARRAYS = ("psi", "pi", "psi_ref", "rho_ref")

# symmetric second-difference weights (centre, offset 1, offset 2, ...)
STENCILS = {
    2: (-2.0, 1.0),
    4: (-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0),
    6: (-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0),
}
DEFAULT_ORDER = 6


def stencil(order: int) -> np.ndarray:
    try:
        return np.asarray(STENCILS[order], dtype=float)
    except KeyError:
        raise ValueError(f"Laplacian order must be one of {sorted(STENCILS)}") from None


def cfl_limit(h: float, order: int = DEFAULT_ORDER) -> float:
    """Largest stable leapfrog step for the 3-d Laplacian of the given order."""
    c = stencil(order)
    a = np.arange(1, len(c))
    theta = np.linspace(0, np.pi, 2001)
    sym = -(c[0] + 2 * np.sum(c[1:, None] * np.cos(a[:, None] * theta), axis=0))
    return float(2.0 * h / np.sqrt(3.0 * sym.max()))


@dataclass
class WaveField:
    grid: Grid
    psi: np.ndarray
    pi: np.ndarray
    psi_ref: np.ndarray
    rho_ref: np.ndarray
    ref_energy: float = 0.0
    time: float = 0.0
    support_radius: float = 0.0
    tail: bool = True
    order: int = DEFAULT_ORDER
    _lap: np.ndarray | None = dc_field(default=None, repr=False)

    def copy(self) -> "WaveField":
        return replace(self, psi=self.psi.copy(), pi=self.pi.copy(), _lap=None)

    @property
    def phi(self) -> np.ndarray:
        return self.psi - self.psi_ref

    def lap_phi(self) -> np.ndarray:
        """L(psi - psi_ref), cached until psi changes."""
        if self._lap is None:
            self._lap = laplacian(self.grid, self.phi, self.order)
        return self._lap

    def invalidate(self):
        self._lap = None


def laplacian(grid: Grid, f: np.ndarray, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Central-difference Laplacian of the given order; zero on the frame layers."""
    out = np.empty_like(f)
    backend.laplacian(np.ascontiguousarray(f), out, grid.h, stencil(order))
    return out


# construction --------------------------------------------------------------
def zero_field(grid: Grid, order: int = DEFAULT_ORDER) -> WaveField:
    z = grid.zeros()
    return WaveField(grid, z.copy(), z.copy(), z.copy(), z.copy(), 0.0, 0.0, 0.0, tail=False, order=order)


def free_field(grid: Grid, psi: np.ndarray, pi: np.ndarray | None = None, order: int = DEFAULT_ORDER) -> WaveField:
    """Source-free data with no static part; psi must vanish near the frame."""
    z = grid.zeros()
    pi = z.copy() if pi is None else np.array(pi, dtype=float)
    return WaveField(grid, np.array(psi, dtype=float), pi, z.copy(), z.copy(), 0.0, 0.0, 0.0, tail=False,
                     order=order)


def coulomb_grid(k: RegularizationKernel, grid: Grid, q, w) -> np.ndarray:
    """sum_i w_i psi_rho(x - q_i) at every node (direct summation)."""
    out = grid.zeros()
    t = k.tables
    backend.coulomb_direct(np.ascontiguousarray(q, dtype=float), np.ascontiguousarray(w, dtype=float), out,
                           grid.lo, grid.h, k.radius, t["pot"], t["pot_k"])
    return out


def deposit(k: RegularizationKernel, grid: Grid, q, w) -> np.ndarray:
    q = np.ascontiguousarray(q, dtype=float).reshape(-1, 3)
    grid.require_ball(q, k.radius)
    out = grid.zeros()
    backend.deposit(q, np.ascontiguousarray(w, dtype=float), out, grid.lo, grid.h, k.radius, k.tables["val"])
    return out


def init_ground_field(k: RegularizationKernel, grid: Grid, q, w, support_radius: float | None = None,
                      order: int = DEFAULT_ORDER) -> WaveField:
    """Static Coulomb field of the smeared configuration sum_i w_i rho(. - q_i).

    psi(x) = -(1/4pi) int density(y)/|x - y| dy is summed directly from the
    closed-form potential of one kernel copy; varpi = 0.
    """
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    w = np.asarray(w, dtype=float).reshape(-1)
    reach = float(np.max(np.linalg.norm(q, axis=1))) + k.radius if len(q) else 0.0
    if support_radius is None:
        support_radius = reach
    elif reach > support_radius * (1 + 1e-12):
        raise SupportExceedsDomain(f"source support radius {reach:.6g} exceeds B_R with R={support_radius}")
    rho = deposit(k, grid, q, w)
    psi = coulomb_grid(k, grid, q, w)
    s_ref = float(-0.5 * grid.cell_volume * np.sum(rho * psi))
    return WaveField(grid, psi.copy(), grid.zeros(), psi, rho, s_ref, 0.0, float(support_radius), tail=True,
                     order=order)


# time stepping ---------------------------------------------------------------
def check_cfl(grid: Grid, dt: float, order: int = DEFAULT_ORDER):
    lim = min(cfl_limit(grid.h, order), grid.h / np.sqrt(3.0))
    if dt > lim * (1 + 1e-12):
        raise CFLViolation(f"dt={dt} exceeds the stability limit {lim:.6g} (h={grid.h:.6g}, order {order})")


def kick(f: WaveField, source: np.ndarray, dt: float):
    """varpi += dt (L phi + rho_ref - source), in place."""
    f.pi += dt * (f.lap_phi() + f.rho_ref - source)


def drift(f: WaveField, dt: float):
    f.psi += dt * f.pi
    f.invalidate()


def leapfrog_step(f: WaveField, source: np.ndarray, dt: float, source_end: np.ndarray | None = None,
                  inplace: bool = False) -> WaveField:
    """One kick-drift-kick step of the wave equation driven by `source`.

    `source_end` is the source at the end of the step (defaults to `source`).
    """
    check_cfl(f.grid, dt, f.order)
    g = f if inplace else f.copy()
    kick(g, source, 0.5 * dt)
    drift(g, dt)
    kick(g, source if source_end is None else source_end, 0.5 * dt)
    g.time = f.time + dt
    return g


# energies and norms ------------------------------------------------------------
def grad_energy(f: WaveField) -> float:
    """1/2 ||psi||_{H^1-dot}^2 in the discrete quadratic form."""
    phi = f.phi
    dv = f.grid.cell_volume
    return float(f.ref_energy - dv * np.sum(phi * f.rho_ref) - 0.5 * dv * np.sum(phi * f.lap_phi()))


def pi_energy(f: WaveField) -> float:
    return float(0.5 * f.grid.cell_volume * np.sum(f.pi * f.pi))


def field_energy(f: WaveField) -> float:
    """E_W = 1/2 int (|grad psi|^2 + varpi^2), tail included."""
    return grad_energy(f) + pi_energy(f)


def hdot1_norm(f: WaveField) -> float:
    return float(np.sqrt(max(2.0 * grad_energy(f), 0.0)))


def pi_norm(f: WaveField) -> float:
    return float(np.sqrt(2.0 * pi_energy(f)))


# snapshots -------------------------------------------------------------------
def save_field(f: WaveField, path) -> Path:
    """Little-endian float64 arrays psi, pi, psi_ref, rho_ref plus a JSON header."""
    path = Path(path)
    header = dict(format="vlasovwave-field", byte_order="little", dtype="float64",
                  arrays=list(SNAPSHOT_ARRAYS), dims=[f.grid.n] * 3, h=f.grid.h,
                  half_width=f.grid.half_width, time=f.time, ref_energy=f.ref_energy,
                  support_radius=f.support_radius, tail=f.tail, laplacian_order=f.order)
    path.with_suffix(".json").write_text(json.dumps(header, indent=1))
    with open(path.with_suffix(".bin"), "wb") as fh:
        for name in SNAPSHOT_ARRAYS:
            fh.write(np.ascontiguousarray(getattr(f, name), dtype="<f8").tobytes())
    return path.with_suffix(".bin")


def load_field(path) -> WaveField:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    n = header["dims"][0]
    grid = Grid(n, header["half_width"])
    raw = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    arrs = raw.reshape(len(header["arrays"]), n, n, n)
    data = {name: np.array(arrs[i], dtype=float) for i, name in enumerate(header["arrays"])}
    return WaveField(grid, data["psi"], data["pi"], data["psi_ref"], data["rho_ref"], header["ref_energy"],
                     header["time"], header["support_radius"], header["tail"], header.get("laplacian_order", 2))


# Kirchhoff evaluator -----------------------------------------------------------
def sphere_rule(n_theta: int = 16, n_phi: int = 32):
    """Product rule on S^2: Gauss-Legendre in cos(theta), uniform in phi.

    Returns unit vectors (m, 3) and weights summing to one (a mean, not an
    integral).
    """
    c, wc = np.polynomial.legendre.leggauss(n_theta)
    ph = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    s = np.sqrt(1 - c ** 2)
    omega = np.stack([np.outer(s, np.cos(ph)).ravel(), np.outer(s, np.sin(ph)).ravel(),
                      np.repeat(c, n_phi)], axis=1)
    w = np.repeat(wc, n_phi) / (2.0 * n_phi)
    return omega, w


class CoulombData:
    """Initial data psi_0 = Coulomb field of sum_i w_i rho(. - q_i), varpi_0 = 0."""

    def __init__(self, k: RegularizationKernel, q, w):
        self.k = k
        self.q = np.asarray(q, dtype=float).reshape(-1, 3)
        self.w = np.asarray(w, dtype=float).reshape(-1)

    def _each(self, x):
        d = np.asarray(x, dtype=float)[..., None, :] - self.q
        return d, np.linalg.norm(d, axis=-1)

    def psi(self, x):
        _, r = self._each(x)
        return np.sum(self.w * self.k.coulomb(r), axis=-1)

    def grad_psi(self, x):
        d, r = self._each(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(r > 0, self.k.coulomb_d1(r) / np.where(r > 0, r, 1.0), 0.0)
        return np.sum((self.w * g)[..., None] * d, axis=-2)

    def lap_psi(self, x):
        d, r = self._each(x)
        return np.sum(self.w * self.k.radial(r), axis=-1)

    def pi(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad_pi(self, x):
        return np.zeros(np.shape(x))


class GaussianPulse:
    """psi_0 = a exp(-|x - c|^2 / (2 s^2)), varpi_0 = 0; a free-wave test datum."""

    def __init__(self, amplitude=1.0, width=0.5, center=(0.0, 0.0, 0.0)):
        self.a = float(amplitude)
        self.s = float(width)
        self.c = np.asarray(center, dtype=float)

    def psi(self, x):
        d = np.asarray(x, dtype=float) - self.c
        return self.a * np.exp(-np.sum(d * d, axis=-1) / (2 * self.s ** 2))

    def grad_psi(self, x):
        d = np.asarray(x, dtype=float) - self.c
        return -(self.psi(x) / self.s ** 2)[..., None] * d

    def lap_psi(self, x):
        d = np.asarray(x, dtype=float) - self.c
        r2 = np.sum(d * d, axis=-1)
        return self.psi(x) * (r2 / self.s ** 4 - 3.0 / self.s ** 2)

    def pi(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad_pi(self, x):
        return np.zeros(np.shape(x))

    def on_grid(self, grid: Grid):
        X, Y, Z = grid.axes()
        pts = np.stack(np.broadcast_arrays(X, Y, Z), axis=-1)
        return self.psi(pts)


class NoData(GaussianPulse):
    def __init__(self):
        super().__init__(amplitude=0.0)


@dataclass
class SourceHistory:
    """Source-particle positions at a uniform sequence of times."""

    kernel: RegularizationKernel
    times: np.ndarray
    q: np.ndarray  # (nt, N, 3)
    w: np.ndarray  # (N,)

    def index(self, t: float) -> int:
        i = int(round((t - self.times[0]) / (self.times[1] - self.times[0]))) if len(self.times) > 1 else 0
        if i < 0 or i >= len(self.times) or abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise HorizonError(f"t={t} is not a stored history time (range [{self.times[0]}, {self.times[-1]}])")
        return i

    def density(self, y, i):
        d = np.asarray(y)[..., None, :] - self.q[i]
        return np.sum(self.w * self.kernel.radial(np.linalg.norm(d, axis=-1)), axis=-1)

    def density_grad(self, y, i):
        d = np.asarray(y)[..., None, :] - self.q[i]
        return np.sum(self.w[:, None] * self.kernel.grad(d), axis=-2)


def static_history(k, q, w, times) -> SourceHistory:
    q = np.asarray(q, dtype=float).reshape(-1, 3)
    times = np.asarray(times, dtype=float)
    return SourceHistory(k, times, np.repeat(q[None], len(times), axis=0), np.asarray(w, dtype=float))


def kirchhoff_eval(history: SourceHistory | None, zeta0, x, t: float, n_theta: int = 16, n_phi: int = 32):
    """(psi(x, t), varpi(x, t)) from the retarded sphere-mean representation.

    psi   = <(1 + s W.grad) psi0 + s pi0>_s - int_0^t (t - t'') <S>_{t-t''} dt''
    varpi = <s Lap psi0 + (1 + s W.grad) pi0>_s - int_0^t <(1 + (t - t'') W.grad) S>_{t-t''} dt''

    with s = t, <f>_s the mean of f(x + s W) over unit vectors W, and S the
    smeared source density.  The varpi free term uses the Euler-Poisson-Darboux
    identity d^2/dt^2 (t <f>_t) = t <Lap f>_t.  Time integrals use the composite
    trapezoid rule on the stored history grid.
    """
    x = np.asarray(x, dtype=float)
    omega, wq = sphere_rule(n_theta, n_phi)
    psi = pi = 0.0
    if zeta0 is not None:
        y = x + t * omega
        g0 = zeta0.grad_psi(y)
        psi += np.sum(wq * (zeta0.psi(y) + t * np.sum(omega * g0, axis=1) + t * zeta0.pi(y)))
        pi += np.sum(wq * (t * zeta0.lap_psi(y) + zeta0.pi(y) + t * np.sum(omega * zeta0.grad_pi(y), axis=1)))
    if history is not None and t > 0:
        n = history.index(t)
        times = history.times[: n + 1]
        cw = np.full(n + 1, times[1] - times[0] if n > 0 else 0.0)
        cw[0] *= 0.5
        cw[-1] *= 0.5
        for i in range(n + 1):
            s = t - times[i]
            y = x + s * omega
            dens = history.density(y, i)
            if s > 0:
                psi -= cw[i] * s * np.sum(wq * dens)
                gr = history.density_grad(y, i)
                pi -= cw[i] * np.sum(wq * (dens + s * np.sum(omega * gr, axis=1)))
            else:
                pi -= cw[i] * float(history.density(x, i))
    elif history is None and t < 0:
        raise HorizonError("negative time")
    return float(psi), float(pi)

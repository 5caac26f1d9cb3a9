"""Vlasov side: stored trajectories, characteristics, the fixed-point map and its constants.

A trajectory holds, at uniformly spaced sample times, the support points of
a measure (transported atoms with fixed weights) and the field pair.  Between
samples the field enters linearly: forces are interpolated linearly in time
and so are source positions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import backend
from .dynamics import CoupledStepper, SystemState
from .errors import HorizonError
from .field import WaveField, check_cfl, deposit, laplacian, load_field, save_field
from .grid import Grid
from .kernel import RegularizationKernel
from .measures import WeightedPointMeasure, kr_distance
from .particles import velocity


@dataclass
class TrajectoryRecord:
    times: np.ndarray  # (nt,)
    points: np.ndarray  # (nt, m, 6)
    weights: np.ndarray  # (m,)
    psi: np.ndarray  # (nt, n, n, n)
    pi: np.ndarray  # (nt, n, n, n)
    template: WaveField  # grid, static reference part and stencil order
    dt: float
    stride: int
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        nt = len(self.times)
        if not (self.points.shape[0] == self.psi.shape[0] == self.pi.shape[0] == nt):
            raise ValueError("snapshot counts disagree with the time grid")
        if nt > 1 and not np.allclose(np.diff(self.times), self.dt * self.stride, rtol=1e-9, atol=1e-12):
            raise ValueError("sample times are not uniform with spacing stride * dt")
        if self.psi.shape[1:] != self.template.grid.shape:
            raise ValueError("field snapshots do not match the grid")

    @property
    def grid(self) -> Grid:
        return self.template.grid

    @property
    def nsteps(self) -> int:
        return (len(self.times) - 1) * self.stride

    def measure(self, i) -> WeightedPointMeasure:
        return WeightedPointMeasure(self.points[i], self.weights)

    def field(self, i) -> WaveField:
        f = self.template.copy()
        f.psi = self.psi[i].copy()
        f.pi = self.pi[i].copy()
        f.time = float(self.times[i])
        f.invalidate()
        return f

    def _split(self, n):
        """Snapshot index and linear weight of step n."""
        n = min(max(n, 0), self.nsteps)
        j = min(n // self.stride, len(self.times) - 2) if len(self.times) > 1 else 0
        th = (n - j * self.stride) / self.stride if len(self.times) > 1 else 0.0
        return j, th

    def positions_at_step(self, n) -> np.ndarray:
        if len(self.times) == 1:
            return self.points[0, :, :3]
        j, th = self._split(n)
        return (1 - th) * self.points[j, :, :3] + th * self.points[j + 1, :, :3]

    def force_at_step(self, k: RegularizationKernel, q, n) -> np.ndarray:
        g = self.grid
        q = np.ascontiguousarray(q)
        if not g.contains_ball(q, k.radius):
            raise HorizonError("a characteristic left the field grid")

        def f(i):
            return backend.gather_grad(q, self.psi[i], g.lo, g.h, k.radius, k.tables["grad"])

        if len(self.times) == 1:
            return g.cell_volume * f(0)
        j, th = self._split(n)
        out = (1 - th) * f(j) if th < 1 else 0.0
        if th > 0:
            out = out + th * f(j + 1)
        return g.cell_volume * out

    # persistence ---------------------------------------------------------
    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        manifest = dict(format="vlasovwave-trajectory", times=self.times.tolist(), dt=self.dt, stride=self.stride,
                        weights=self.weights.tolist(), n_points=int(self.points.shape[1]), meta=self.meta,
                        snapshots=[])
        save_field(self.template, d / "template")
        for i in range(len(self.times)):
            f = self.field(i)
            save_field(f, d / f"field_{i:05d}")
            np.ascontiguousarray(self.points[i], dtype="<f8").tofile(d / f"points_{i:05d}.bin")
            manifest["snapshots"].append(dict(field=f"field_{i:05d}.bin", points=f"points_{i:05d}.bin"))
        (d / "manifest.json").write_text(json.dumps(manifest, indent=1))
        return d

    @classmethod
    def load(cls, directory) -> "TrajectoryRecord":
        d = Path(directory)
        man = json.loads((d / "manifest.json").read_text())
        tmpl = load_field(d / "template")
        psi, pi, pts = [], [], []
        for s in man["snapshots"]:
            f = load_field(d / s["field"])
            psi.append(f.psi)
            pi.append(f.pi)
            pts.append(np.fromfile(d / s["points"], dtype="<f8").reshape(man["n_points"], 6))
        return cls(np.array(man["times"]), np.array(pts), np.array(man["weights"]), np.array(psi), np.array(pi),
                   tmpl, man["dt"], man["stride"], man.get("meta", {}))


def _template(f: WaveField) -> WaveField:
    t = f.copy()
    t.time = 0.0
    return t


def record_solution(k: RegularizationKernel, state: SystemState, dt: float, T: float, stride: int = 1,
                    every_step_positions: bool = False):
    """Run the coupled system and store it as a TrajectoryRecord.

    Returns (record, positions) where positions (nsteps + 1, N, 3) is filled
    only when requested.
    """
    nsteps = int(round(T / dt))
    if nsteps % stride:
        raise ValueError("the number of steps must be a multiple of the stride")
    tmpl = _template(state.field)
    stepper = CoupledStepper(k, state, dt)
    times, pts, psi, pi = [state.time], [state.ensemble.phase_points()], [state.field.psi.copy()], [state.field.pi.copy()]
    allq = [state.ensemble.q.copy()] if every_step_positions else None
    for n in range(1, nsteps + 1):
        stepper.step()
        if every_step_positions:
            allq.append(state.ensemble.q.copy())
        if n % stride == 0:
            times.append(state.time)
            pts.append(state.ensemble.phase_points())
            psi.append(state.field.psi.copy())
            pi.append(state.field.pi.copy())
    rec = TrajectoryRecord(np.array(times), np.array(pts), state.ensemble.weight.copy(), np.array(psi),
                           np.array(pi), tmpl, dt, stride, dict(N=state.ensemble.N, kernel_radius=k.radius))
    return rec, (np.array(allq) if every_step_positions else None)


def zero_trajectory(like: TrajectoryRecord, initial_points=None) -> TrajectoryRecord:
    """The trivial curve 0.: no measure, vanishing field, on the same time grid."""
    nt = len(like.times)
    pts = np.zeros((nt, 0, 6))
    z = np.zeros_like(like.psi)
    return TrajectoryRecord(like.times.copy(), pts, np.zeros(0), z, z.copy(), like.template, like.dt, like.stride,
                            dict(like.meta, zero=True))


# characteristics -------------------------------------------------------------
def characteristics_flow(k: RegularizationKernel, traj: TrajectoryRecord, z0, t: float, t0: float = 0.0):
    """Pi_{t,t0}: test particles moved by the stored fields from time t0 to t.

    Uses the kick-drift-kick step of the coupled integrator; backward
    integration (t < t0) applies the exact inverse steps.
    """
    z = np.array(z0, dtype=float)
    single = z.ndim == 1
    z = z.reshape(-1, 6).copy()
    dt = traj.dt
    base = traj.times[0]
    n0 = int(round((t0 - base) / dt))
    n1 = int(round((t - base) / dt))
    for n, name in ((n0, "t0"), (n1, "t")):
        if abs(base + n * dt - (t if name == "t" else t0)) > 1e-9 * max(1.0, abs(t)) or n < 0 or n > traj.nsteps:
            raise HorizonError(f"{name} is outside the stored trajectory or not on its step grid")
    step = 1 if n1 >= n0 else -1
    h = step * dt
    q, p = z[:, :3], z[:, 3:]
    for n in range(n0, n1, step):
        p += 0.5 * h * traj.force_at_step(k, q, n)
        q += h * velocity(p)
        p += 0.5 * h * traj.force_at_step(k, q, n + step)
    out = np.hstack([q, p])
    return out[0] if single else out


def flow_jacobian(k, traj, z0, t, delta: float = 1e-5, t0: float = 0.0) -> np.ndarray:
    """6 x 6 Jacobian of Pi_{t,t0} at z0 by central differences."""
    z0 = np.asarray(z0, dtype=float)
    pts = np.vstack([z0 + s * delta * e for e in np.eye(6) for s in (1, -1)])
    img = characteristics_flow(k, traj, pts, t, t0)
    return np.stack([(img[2 * a] - img[2 * a + 1]) / (2 * delta) for a in range(6)], axis=1)


def flow_jacobian_check(k, traj, z0, t, delta: float = 1e-5) -> float:
    """det of the finite-difference Jacobian of the characteristic flow."""
    return float(np.linalg.det(flow_jacobian(k, traj, z0, t, delta)))


def flow_lipschitz_bound(w_lower: float, t: float) -> float:
    """(1/sqrt 2)(2 + max{w, 1/w}) e^{w t}, the Lipschitz constant of Pi_t."""
    return float((2 + max(w_lower, 1 / w_lower)) * np.exp(w_lower * t) / np.sqrt(2))


# the fixed-point map ---------------------------------------------------------
def hdot1_diff(traj_a: TrajectoryRecord, traj_b: TrajectoryRecord, i: int, order: int | None = None) -> float:
    g = traj_a.grid
    d = traj_a.psi[i] - traj_b.psi[i]
    o = traj_a.template.order if order is None else order
    return float(np.sqrt(max(g.cell_volume * np.sum(d * -laplacian(g, d, o)), 0.0)))


def _hdot1(f: WaveField) -> float:
    """||psi||_{H^1-dot} of a field snapshot (quadratic form, tail included)."""
    from .field import hdot1_norm

    return hdot1_norm(f)


def apply_F(k: RegularizationKernel, trial: TrajectoryRecord, mu0: WeightedPointMeasure, zeta0: WaveField,
            cap: float | None = None) -> TrajectoryRecord:
    """F(trial | mu0, zeta0): transport mu0 by the trial's fields, evolve zeta0 with the trial's sources.

    With `cap` set, the output psi at each sample time is scaled by
    min{1, cap / ||psi||_{H^1-dot}}.
    """
    g = trial.grid
    dt = trial.dt
    check_cfl(g, dt, zeta0.order)
    nsteps = trial.nsteps
    # measure half: characteristics of every atom of mu0
    z = mu0.points.copy()
    q, p = z[:, :3], z[:, 3:]
    pts = [z.copy()]
    # field half
    f = zeta0.copy()
    f.time = float(trial.times[0])
    w_tr = trial.weights
    zero = g.zeros()

    def source(n):
        if len(w_tr) == 0:
            return zero
        return deposit(k, g, trial.positions_at_step(n), w_tr)

    psi, pi = [f.psi.copy()], [f.pi.copy()]
    src = source(0)
    F = trial.force_at_step(k, q, 0) if len(q) else np.zeros((0, 3))
    for n in range(nsteps):
        p += 0.5 * dt * F
        f.pi += 0.5 * dt * (f.lap_phi() + f.rho_ref - src)
        q += dt * velocity(p)
        f.psi += dt * f.pi
        f.invalidate()
        src = source(n + 1)
        F = trial.force_at_step(k, q, n + 1) if len(q) else F
        p += 0.5 * dt * F
        f.pi += 0.5 * dt * (f.lap_phi() + f.rho_ref - src)
        f.time += dt
        if (n + 1) % trial.stride == 0:
            pts.append(np.hstack([q, p]))
            psi.append(f.psi.copy())
            pi.append(f.pi.copy())
    psi = np.array(psi)
    if cap is not None:
        for i in range(len(psi)):
            snap = f.copy()
            snap.psi = psi[i]
            snap.invalidate()
            nrm = _hdot1(snap)
            if nrm > cap:
                psi[i] *= cap / nrm
    return TrajectoryRecord(trial.times.copy(), np.array(pts), mu0.weights.copy(), psi, np.array(pi),
                            _template(zeta0), dt, trial.stride, dict(trial.meta, applied_F=True))


def weighted_supnorm(a: TrajectoryRecord, b: TrajectoryRecord, w: float, details: bool = False):
    """sup_t e^{-w t} (KR distance of the measures + ||d psi||_{H^1-dot} + ||d varpi||_{L^2})."""
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times) or a.grid != b.grid:
        raise ValueError("trajectories live on different time or space grids")
    g = a.grid
    vals = []
    for i, t in enumerate(a.times):
        ma, mb = a.measure(i), b.measure(i)
        if ma.size and mb.size:
            dm = kr_distance(ma, mb)
        elif ma.size or mb.size:
            from .measures import signed_extension_norm

            dm = signed_extension_norm(ma - mb)
        else:
            dm = 0.0
        dpsi = hdot1_diff(a, b, i)
        dpi = float(np.sqrt(g.cell_volume * np.sum((a.pi[i] - b.pi[i]) ** 2)))
        vals.append((np.exp(-w * (t - a.times[0])) * (dm + dpsi + dpi), dm, dpsi, dpi))
    v = np.array(vals)
    out = float(v[:, 0].max())
    return (out, v) if details else out


@dataclass
class PicardLog:
    gaps: list
    ratios: list
    iterates: int
    w: float

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else float("nan")


def picard_iterate(k, mu0: WeightedPointMeasure, zeta0: WaveField, like: TrajectoryRecord, w: float, iters: int,
                   cap: float | None = None, keep_last: bool = False):
    """Iterate F from the free evolution of the initial data.

    `like` supplies the time grid (dt, stride, horizon) and space grid.
    Returns the log of successive gaps ||X_{n+1} - X_n||_w and their ratios.
    """
    cur = apply_F(k, zero_trajectory(like), mu0, zeta0, cap)
    gaps, ratios = [], []
    for _ in range(iters):
        nxt = apply_F(k, cur, mu0, zeta0, cap)
        gaps.append(weighted_supnorm(nxt, cur, w))
        if len(gaps) > 1 and gaps[-2] > 0:
            ratios.append(gaps[-1] / gaps[-2])
        cur = nxt
    log = PicardLog(gaps, ratios, iters, w)
    return (log, cur) if keep_last else log


# contraction constants -------------------------------------------------------
def iterated_lipschitz(k: RegularizationKernel, n: int = 96, box: float | None = None):
    """sup_x of the Hessian spectral norm of rho*Lap rho, rho*rho and rho*d_3^2 rho.

    The convolutions are formed spectrally from node samples of rho on a
    periodic box wide enough to hold the support of rho*rho (radius 2 eps).
    """
    L = 2.6 * k.radius if box is None else box
    h = 2 * L / n
    x = -L + h * np.arange(n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    rho = k.eval(np.stack([X, Y, Z], axis=-1))
    R = np.fft.fftn(np.fft.ifftshift(rho)) * h ** 3
    kk = 2 * np.pi * np.fft.fftfreq(n, h)
    K = np.meshgrid(kk, kk, kk, indexing="ij")
    k2 = K[0] ** 2 + K[1] ** 2 + K[2] ** 2
    base = R * R

    def sup_hess(mult):
        H = np.empty((n, n, n, 3, 3))
        for i in range(3):
            for j in range(i, 3):
                v = np.real(np.fft.ifftn(-K[i] * K[j] * mult * base)) / h ** 3
                H[..., i, j] = v
                H[..., j, i] = v
        return float(np.max(np.abs(np.linalg.eigvalsh(H))))

    return dict(lap=sup_hess(-k2), plain=sup_hess(1.0), dir2=sup_hess(-K[2] ** 2))


def L1_const(lit: dict, w: float) -> float:
    return float(np.sqrt(lit["lap"] * 2 / w ** 4) + np.sqrt(lit["plain"] / w ** 2 + lit["dir2"] * 2 / w ** 4))


def L2_const(rho_l2: float, w: float, w_lower: float) -> float:
    if not w > w_lower:
        return np.inf
    return float((1 / w + 1 / w ** 2 + (1 + w) * w_lower ** 2 / (2 * w ** 3 * (w - w_lower))) * rho_l2)


def contraction_constants(k: RegularizationKernel, E: float | None = None, psi0_norm: float = 0.0,
                          lit: dict | None = None) -> dict:
    """Threshold rates of the contraction argument.

    C_psi* is the smallest cap for which L(2 w_, w_) <= 1/2 with
    w_ = sqrt(C_rho C_psi).  w_bar uses the cap max{C_psi*, ||psi_0||, a-priori
    field bound sqrt(4 + 4E - 8E_perp)}.
    """
    from .conservation import ground_state_energy

    c = k.constants
    lit = iterated_lipschitz(k) if lit is None else lit
    c_rho = c.c_rho

    def L_of(cpsi):
        wl = np.sqrt(c_rho * cpsi)
        return max(L1_const(lit, 2 * wl), L2_const(c.l2, 2 * wl, wl))

    hi = 1.0
    while L_of(hi) > 0.5:
        hi *= 2
    lo = hi / 2
    while L_of(lo) <= 0.5 and lo > 1e-12:
        lo /= 2
    cpsi_star = brentq(lambda s: L_of(s) - 0.5, lo, hi, xtol=1e-12)
    caps = [cpsi_star, psi0_norm]
    eperp = ground_state_energy(k)
    if E is not None:
        caps.append(np.sqrt(max(4 + 4 * E - 8 * eperp, 0.0)))
    cpsi = max(caps)
    w_bar = float(np.sqrt(c_rho * cpsi))
    return dict(lit=lit, C_rho=c_rho, C_psi_star=float(cpsi_star), C_psi=float(cpsi), w_lower=w_bar,
                w_bar=w_bar, L_at_2wbar=float(max(L1_const(lit, 2 * w_bar), L2_const(c.l2, 2 * w_bar, w_bar))),
                default_cap=float(4 * np.sqrt(max(4 + 4 * E - 8 * eperp, 0.0))) if E is not None else None)

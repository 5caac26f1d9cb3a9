"""Measure-derivative sensitivities, the covariance Q and the Monte Carlo CLT harness.

The sensitivity D^1 Xi(zbar) is the derivative of the discrete solution in
the direction of the measure perturbation delta_zbar, realized as an extra
particle of infinitesimal weight that starts at zbar.  With weights as
parameters, the coupled step only sees them through the deposited density,
so D^1 Xi(z_i) for a node z_i of the base ensemble is the derivative with
respect to w_i.  Two routes are implemented on the same linearization:

* tangent-linear (forward): the exact derivative of the kick-drift-kick step
  along one weight direction;
* adjoint (reverse): its transpose, giving d(observable)/d(w_i) for every
  node at once.

A dot-product test ties the two together.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import stats

from . import backend
from .dynamics import CoupledStepper, SystemState
from .field import WaveField, laplacian
from .grid import Grid
from .kernel import RegularizationKernel
from .laws import replica_rng
from .particles import ParticleEnsemble


# probes ----------------------------------------------------------------------
@dataclass(frozen=True)
class BumpProbe:
    """Theta = d/dx_axis exp(-|x - c|^2 / (2 s^2)), paired with psi in H^1-dot or with varpi in L^2."""

    center: tuple
    axis: int
    width: float = 0.4
    pairing: str = "psi"  # "psi" or "pi"

    def __post_init__(self):
        if self.pairing not in ("psi", "pi"):
            raise ValueError("pairing must be 'psi' or 'pi'")
        if self.axis not in (0, 1, 2):
            raise ValueError("axis must be 0, 1 or 2")

    def _parts(self, grid: Grid):
        X = grid.axes()
        d = [X[i] - self.center[i] for i in range(3)]
        s2 = self.width ** 2
        r2 = d[0] ** 2 + d[1] ** 2 + d[2] ** 2
        G = np.exp(-0.5 * r2 / s2)
        return d, s2, r2, G

    def theta(self, grid: Grid) -> np.ndarray:
        d, s2, _, G = self._parts(grid)
        return np.broadcast_to(-G * d[self.axis] / s2, grid.shape).copy()

    def minus_lap_theta(self, grid: Grid) -> np.ndarray:
        d, s2, r2, G = self._parts(grid)
        return np.broadcast_to(-G * d[self.axis] / s2 ** 2 * (5 - r2 / s2), grid.shape).copy()

    def weights(self, grid: Grid):
        """(a, b) with <Theta, (psi, varpi)> = h^3 sum(a psi + b varpi)."""
        z = np.zeros(grid.shape)
        if self.pairing == "psi":
            return grid.cell_volume * self.minus_lap_theta(grid), z
        return z, grid.cell_volume * self.theta(grid)

    def as_dict(self):
        return dict(center=list(self.center), axis=self.axis, width=self.width, pairing=self.pairing)


def default_probes(width: float = 0.4):
    """Six bump derivatives: three psi-probes at one center, three varpi-probes at another."""
    out = [BumpProbe((0.5, 0.0, 0.0), a, width, "psi") for a in range(3)]
    out += [BumpProbe((0.0, -0.6, 0.3), a, width, "pi") for a in range(3)]
    return out


@dataclass
class Observable:
    """Linear functional of the state after `step` steps.

    value = cq . q[particle] + cp . p[particle] + sum(a psi) + sum(b varpi)
    """

    step: int
    particle: int | None = None
    cq: np.ndarray | None = None
    cp: np.ndarray | None = None
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    label: str = ""

    def evaluate(self, q, p, psi, pi) -> float:
        v = 0.0
        if self.particle is not None:
            if self.cq is not None:
                v += float(self.cq @ q[self.particle])
            if self.cp is not None:
                v += float(self.cp @ p[self.particle])
        if self.a is not None:
            v += float(np.sum(self.a * psi))
        if self.b is not None:
            v += float(np.sum(self.b * pi))
        return v


def observables(grid: Grid, steps, particle: int, probes=(), labels=None):
    """Six phase coordinates of one particle plus each probe, at every listed step."""
    out = []
    names = ("q1", "q2", "q3", "p1", "p2", "p3")
    for si, n in enumerate(steps):
        tag = f"t{si}" if labels is None else labels[si]
        for c in range(6):
            e = np.zeros(3)
            e[c % 3] = 1.0
            out.append(Observable(n, particle, e if c < 3 else None, e if c >= 3 else None, label=f"{names[c]}@{tag}"))
        for m, pr in enumerate(probes):
            a, b = pr.weights(grid)
            out.append(Observable(n, None, a=a if pr.pairing == "psi" else None, b=b if pr.pairing == "pi" else None,
                                  label=f"probe{m}@{tag}"))
    return out


# base history ------------------------------------------------------------------
@dataclass
class BaseHistory:
    """Everything the linearized step needs along a discrete coupled run."""

    k: RegularizationKernel
    grid: Grid
    order: int
    dt: float
    weights: np.ndarray  # (P,) zero for passive particles
    q: np.ndarray  # (nsteps+1, P, 3)
    p: np.ndarray  # (nsteps+1, P, 3)
    pmid: np.ndarray  # (nsteps, P, 3) momenta after the first half kick
    hess: np.ndarray  # (nsteps+1, P, 3, 3) h^3 sum_x Hess rho(x - q) psi(x)
    psi_norm: np.ndarray  # (nsteps+1,) ||psi_n||_{H^1-dot}
    outputs: dict = dc_field(default_factory=dict)  # step -> (psi, pi) snapshots kept for observables

    @property
    def nsteps(self) -> int:
        return len(self.pmid)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.nsteps + 1)

    @property
    def P(self) -> int:
        return len(self.weights)

    def observe(self, obs) -> np.ndarray:
        vals = []
        for o in obs:
            psi, pi = self.outputs[o.step]
            vals.append(o.evaluate(self.q[o.step], self.p[o.step], psi, pi))
        return np.array(vals)


def _hess(k, grid, q, psi):
    t = k.tables
    return grid.cell_volume * backend.gather_hess(np.ascontiguousarray(q), psi, grid.lo, grid.h, k.radius,
                                                  t["grad"], t["hess_b"])


def record_base(k: RegularizationKernel, ensemble: ParticleEnsemble, field: WaveField, dt: float, T: float,
                passive=None, keep_steps=(), check_horizon: bool = True) -> BaseHistory:
    """Run the coupled system with zero-weight passive points appended, storing the linearization data.

    Passive points (M, 6) follow the characteristics of the run without
    sourcing it: they are the extra particle at zbar and test particles.
    """
    from .field import hdot1_norm

    e = ensemble.copy()
    if passive is not None and len(passive):
        pa = np.atleast_2d(np.asarray(passive, dtype=float))
        e = ParticleEnsemble(np.vstack([e.q, pa[:, :3]]), np.vstack([e.p, pa[:, 3:]]),
                             np.concatenate([e.weight, np.zeros(len(pa))]))
    state = SystemState(e, field.copy())
    nsteps = int(round(T / dt))
    g = field.grid
    st = CoupledStepper(k, state, dt, check_horizon=check_horizon)
    keep = set(int(s) for s in keep_steps)
    qs, ps, pm, hs, nr = [e.q.copy()], [e.p.copy()], [], [_hess(k, g, e.q, state.field.psi)], [hdot1_norm(state.field)]
    outs = {0: (state.field.psi.copy(), state.field.pi.copy())} if 0 in keep else {}
    for n in range(1, nsteps + 1):
        st.step()
        pm.append(e.p - 0.5 * dt * st.F)
        qs.append(e.q.copy())
        ps.append(e.p.copy())
        hs.append(_hess(k, g, e.q, state.field.psi))
        nr.append(hdot1_norm(state.field))
        if n in keep:
            outs[n] = (state.field.psi.copy(), state.field.pi.copy())
    return BaseHistory(k, g, field.order, dt, e.weight.copy(), np.array(qs), np.array(ps), np.array(pm),
                       np.array(hs), np.array(nr), outs)


def _dvel(p):
    """d v / d p = I / gamma - p p^T / gamma^3, shape (P, 3, 3)."""
    g = np.sqrt(1.0 + np.sum(p * p, axis=1))
    return np.eye(3)[None] / g[:, None, None] - p[:, :, None] * p[:, None, :] / g[:, None, None] ** 3


# tangent-linear route ------------------------------------------------------------
@dataclass
class SensitivityState:
    time: float
    dq: np.ndarray  # (P, 3)
    dp: np.ndarray  # (P, 3)
    dpsi: np.ndarray
    dpi: np.ndarray
    zbar: np.ndarray | None = None

    def dgrad_psi(self, grid: Grid) -> np.ndarray:
        return grid.gradient(self.dpsi)


@dataclass
class SensitivityRun:
    states: list  # SensitivityState at the kept steps
    steps: list
    # per-step norms for the bound chain
    sup_dq: np.ndarray
    sup_dp: np.ndarray
    dpsi_h1: np.ndarray
    dpsi_l2: np.ndarray
    dpi_l2: np.ndarray
    times: np.ndarray
    outputs: np.ndarray | None = None  # observables, when requested


class _Lin:
    """Shared pieces of the linearized step around a BaseHistory."""

    def __init__(self, base: BaseHistory, coupling: float = 1.0):
        self.b = base
        self.g = base.grid
        self.c = float(coupling)
        t = base.k.tables
        self.eps = base.k.radius
        self.tv, self.tg = t["val"], t["grad"]
        self.src = np.flatnonzero(base.weights > 0)
        self.ws = base.weights[self.src]

    def lap(self, f):
        return laplacian(self.g, f, self.b.order)

    def gval(self, q, f):
        return backend.gather_value(np.ascontiguousarray(q), f, self.g.lo, self.g.h, self.eps, self.tv)

    def ggrad(self, q, f):
        return backend.gather_grad(np.ascontiguousarray(q), f, self.g.lo, self.g.h, self.eps, self.tg)

    def dep(self, q, w):
        out = self.g.zeros()
        if len(w):
            backend.deposit(np.ascontiguousarray(q), np.ascontiguousarray(w, dtype=float), out, self.g.lo, self.g.h,
                            self.eps, self.tv)
        return out

    def dip(self, q, a):
        out = self.g.zeros()
        if len(a):
            backend.deposit_dipole(np.ascontiguousarray(q), np.ascontiguousarray(a), out, self.g.lo, self.g.h,
                                   self.eps, self.tg)
        return out


def _frame_zero(f, m):
    if m:
        f[:m] = 0
        f[-m:] = 0
        f[:, :m] = 0
        f[:, -m:] = 0
        f[:, :, :m] = 0
        f[:, :, -m:] = 0
    return f


def sensitivity_evolve(base: BaseHistory, dw, T: float | None = None, keep_steps=(), obs=None,
                       coupling: float = 1.0, zbar=None) -> SensitivityRun:
    """Forward sensitivity along the weight direction dw (P,), from the zero state.

    dw = e_j is D^1 Xi(z_j) for the base particle j (a passive point gives
    the derivative in the direction delta_zbar).  `coupling` scales the
    field-to-particle terms; at 0 the particles do not respond and dpsi is
    the retarded field of the extra source alone.
    """
    L = _Lin(base, coupling)
    g = L.g
    h3 = g.cell_volume
    dw = np.asarray(dw, dtype=float)
    act = np.flatnonzero(dw != 0)
    P = base.P
    nsteps = base.nsteps if T is None else int(round(T / base.dt))
    dt = base.dt
    dq, dp = np.zeros((P, 3)), np.zeros((P, 3))
    dpsi, dpi = g.zeros(), g.zeros()
    keep = set(int(s) for s in keep_steps)
    states, kept = [], []
    norms = []
    outs = np.zeros(len(obs)) if obs else None

    def norm_row():
        lp = L.lap(dpsi)
        return (float(np.max(np.linalg.norm(dq, axis=1))), float(np.max(np.linalg.norm(dp, axis=1))),
                float(np.sqrt(max(h3 * np.sum(dpsi * -lp), 0.0))), float(np.sqrt(h3 * np.sum(dpsi ** 2))),
                float(np.sqrt(h3 * np.sum(dpi ** 2))))

    def record(n):
        if n in keep:
            states.append(SensitivityState(n * dt, dq.copy(), dp.copy(), dpsi.copy(), dpi.copy(), zbar))
            kept.append(n)
        if obs:
            for i, o in enumerate(obs):
                if o.step == n:
                    outs[i] = o.evaluate(dq, dp, dpsi, dpi)

    def kick(tau, n):
        nonlocal dpsi
        qn = base.q[n]
        dp[:] += tau * L.c * (h3 * L.ggrad(qn, dpsi) - np.einsum("pij,pj->pi", base.hess[n], dq))
        dpi[:] += tau * (L.lap(dpsi) - L.dep(qn[act], dw[act]) + L.dip(qn[L.src], L.ws[:, None] * dq[L.src]))

    record(0)
    norms.append(norm_row())
    for n in range(nsteps):
        kick(0.5 * dt, n)
        dq[:] += dt * np.einsum("pij,pj->pi", _dvel(base.pmid[n]), dp)
        dpsi += dt * dpi
        kick(0.5 * dt, n + 1)
        record(n + 1)
        norms.append(norm_row())
    nr = np.array(norms)
    return SensitivityRun(states, kept, nr[:, 0], nr[:, 1], nr[:, 2], nr[:, 3], nr[:, 4], dt * np.arange(nsteps + 1),
                          outs)


# adjoint route ---------------------------------------------------------------------
def adjoint_gradient(base: BaseHistory, ob: Observable, coupling: float = 1.0) -> np.ndarray:
    """d(observable)/d(w_j) for every particle j of the base, by one reverse sweep."""
    L = _Lin(base, coupling)
    g = L.g
    h3 = g.cell_volume
    P = base.P
    dt = base.dt
    m = base.order // 2
    aq, ap = np.zeros((P, 3)), np.zeros((P, 3))
    apsi, api = g.zeros(), g.zeros()
    aw = np.zeros(P)

    def seed():
        if ob.particle is not None:
            if ob.cq is not None:
                aq[ob.particle] += ob.cq
            if ob.cp is not None:
                ap[ob.particle] += ob.cp
        if ob.a is not None:
            apsi[:] += ob.a
        if ob.b is not None:
            api[:] += ob.b

    def kick_t(tau, n):
        qn = base.q[n]
        a_pi = _frame_zero(api.copy(), m)  # the forward Laplacian never writes the frame
        apsi[:] += tau * (L.c * h3 * L.dip(qn, ap) + L.lap(a_pi))
        gg = L.ggrad(qn[L.src], a_pi)
        aq[:] -= tau * L.c * np.einsum("pji,pj->pi", base.hess[n], ap)
        aq[L.src] += tau * L.ws[:, None] * gg
        aw[:] -= tau * L.gval(qn, a_pi)

    if ob.step > base.nsteps:
        raise ValueError("observable lies beyond the base history")
    seed()
    for n in range(ob.step - 1, -1, -1):
        kick_t(0.5 * dt, n + 1)
        ap[:] += dt * np.einsum("pji,pj->pi", _dvel(base.pmid[n]), aq)
        api[:] += dt * apsi
        kick_t(0.5 * dt, n)
    return aw


def dot_product_test(base: BaseHistory, ob: Observable, dw) -> tuple:
    """(<ob, TLM dw>, <adjoint(ob), dw>); equal up to roundoff for a consistent pair."""
    run = sensitivity_evolve(base, dw, T=ob.step * base.dt, obs=[ob])
    return float(run.outputs[0]), float(adjoint_gradient(base, ob) @ np.asarray(dw, dtype=float))


# bounds -------------------------------------------------------------------------------
@dataclass
class SensitivityBoundReport:
    times: np.ndarray
    lhs: dict  # name -> array over time
    rhs: dict

    @property
    def ok(self) -> bool:
        return all(bool(np.all(self.lhs[k] <= self.rhs[k] * (1 + 1e-6) + 1e-12)) for k in self.lhs)

    def violations(self):
        return [k for k in self.lhs if not np.all(self.lhs[k] <= self.rhs[k] * (1 + 1e-6) + 1e-12)]

    def margins(self) -> dict:
        return {k: float(np.max(self.lhs[k] - self.rhs[k])) for k in self.lhs}


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _moment(y, t):
    """int_0^{t_n} (t_n - s) y(s) ds for every n (trapezoid)."""
    return np.array([np.trapezoid((t[n] - t[: n + 1]) * y[: n + 1], t[: n + 1]) if n else 0.0 for n in range(len(t))])


def sensitivity_bounds_check(run: SensitivityRun, base: BaseHistory, total_variation: float = 1.0
                             ) -> SensitivityBoundReport:
    """Gronwall-chain inequalities for the first variation along the run.

    The sup norms run over every particle of the base (sources and passive
    points); the field norms are those of the single direction evolved.
    """
    c = base.k.constants
    t = run.times
    s = total_variation
    lhs, rhs = {}, {}
    lhs["dq"] = run.sup_dq
    rhs["dq"] = _cumtrapz(run.sup_dp, t)
    lhs["dp"] = run.sup_dp
    rhs["dp"] = _cumtrapz(c.grad_l2 * base.psi_norm[: len(t)] * run.sup_dq + c.l2 * run.dpsi_h1, t)
    mq = _moment(run.sup_dq, t)
    lhs["dpsi_h1"] = run.dpsi_h1
    rhs["dpsi_h1"] = 0.5 * t * t * c.grad_l2 + c.hess_l2 * s * mq
    lhs["dpi_l2"] = run.dpi_l2
    rhs["dpi_l2"] = t * c.l2 + 0.5 * t * t * c.grad_l2 + s * (c.grad_l2 * _cumtrapz(run.sup_dq, t) + c.hess_l2 * mq)
    lhs["dpsi_l2"] = run.dpsi_l2
    rhs["dpsi_l2"] = 0.5 * t * t * c.l2 + c.grad_l2 * s * mq
    return SensitivityBoundReport(t, lhs, rhs)


# covariance Q ---------------------------------------------------------------------------
def sensitivity_matrix(base: BaseHistory, obs, nodes=None, threads: int = 1) -> np.ndarray:
    """D[j, k] = D^1 (observable k)(z_j) for the listed base particles (default: all sources)."""
    nodes = np.flatnonzero(base.weights > 0) if nodes is None else np.asarray(nodes)
    if not obs:
        raise ValueError("empty probe basis")
    if threads > 1 and len(obs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            cols = list(ex.map(adjoint_gradient, [base] * len(obs), obs))
    else:
        cols = [adjoint_gradient(base, o) for o in obs]
    return np.stack([c[nodes] for c in cols], axis=1)


def covariance_Q(D: np.ndarray, weights) -> np.ndarray:
    """Q = int D^1 (x) D^1 dmu_0 - (int D^1 dmu_0) (x) (int D^1 dmu_0) with quadrature weights."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    m = w @ D
    Q = (D * w[:, None]).T @ D - np.outer(m, m)
    return 0.5 * (Q + Q.T)


# Monte Carlo harness ---------------------------------------------------------------------
@dataclass
class CLTRecord:
    N: int
    deltas: np.ndarray  # (M, K)
    reference: np.ndarray  # (K,)
    labels: list
    seeds: list

    @property
    def M(self) -> int:
        return len(self.deltas)

    @property
    def mean(self) -> np.ndarray:
        return self.deltas.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        return self.deltas.std(axis=0, ddof=1) / np.sqrt(self.M)

    @property
    def cov(self) -> np.ndarray:
        return np.cov(self.deltas, rowvar=False)


def _replica(args):
    k, law, field, N, dt, nsteps, z0, obs, master, r = args
    rng = replica_rng(master, r)
    e = law.sample(rng, N)
    base = record_base(k, e, field, dt, nsteps * dt, passive=np.atleast_2d(z0),
                       keep_steps=sorted({o.step for o in obs}))
    P = base.P
    vals = []
    for o in obs:
        o2 = o if o.particle is None else Observable(o.step, P - len(np.atleast_2d(z0)) + o.particle, o.cq, o.cp,
                                                    o.a, o.b, o.label)
        psi, pi = base.outputs[o.step]
        vals.append(o2.evaluate(base.q[o.step], base.p[o.step], psi, pi))
    return np.array(vals)


def run_observables(k, e: ParticleEnsemble, field: WaveField, dt, nsteps, z0, obs, hessians: bool = False):
    """Observables of one nonlinear run with passive points z0 (observable particle index relative to z0)."""
    return _replica((k, _Fixed(e), field, e.N, dt, nsteps, z0, obs, 0, 0))


class _Fixed:
    def __init__(self, e):
        self.e = e

    def sample(self, rng, n):
        return self.e.copy()


def clt_montecarlo(k, law, field: WaveField, N: int, M: int, dt: float, nsteps: int, z0, obs, reference,
                   master_seed: int, threads: int = 1, replica_offset: int = 0) -> CLTRecord:
    """Delta = sqrt(N) (observables of an i.i.d. N-sample run - reference) for M replicas.

    `obs` refer to the passive points z0 by index; the field initial datum is
    the same for every replica.
    """
    if M < 2:
        raise ValueError("need at least two replicas to estimate a covariance")
    seeds = [replica_offset + r for r in range(M)]
    args = [(k, law, field, N, dt, nsteps, z0, obs, master_seed, s) for s in seeds]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            vals = list(ex.map(_replica, args, chunksize=max(1, M // (4 * threads))))
    else:
        vals = [_replica(a) for a in args]
    V = np.array(vals)
    return CLTRecord(N, np.sqrt(N) * (V - np.asarray(reference)[None, :]), np.asarray(reference),
                     [o.label for o in obs], [int(master_seed) ^ s for s in seeds])


# statistics ---------------------------------------------------------------------------------
def cf_grid(Q: np.ndarray, scales=(0.5, 1.0, 1.5), n_dirs: int = 3, seed: int = 7) -> np.ndarray:
    """Probe vectors Z for the characteristic function: scaled principal directions of Q and their sums."""
    lam, U = np.linalg.eigh(Q)
    order = np.argsort(lam)[::-1][:n_dirs]
    base = [U[:, i] / np.sqrt(lam[i]) for i in order if lam[i] > 0]
    dirs = list(base)
    for i in range(len(base)):
        for j in range(i + 1, len(base)):
            dirs.append((base[i] + base[j]) / np.sqrt(2))
    return np.array([s * d for d in dirs for s in scales])


def cf_discrepancy(deltas: np.ndarray, Q: np.ndarray, Z: np.ndarray) -> float:
    """sup_Z |mean exp(i Z.Delta) - exp(-Z.Q.Z / 2)|."""
    emp = np.exp(1j * deltas @ Z.T).mean(axis=0)
    gauss = np.exp(-0.5 * np.einsum("ki,ij,kj->k", Z, Q, Z))
    return float(np.max(np.abs(emp - gauss)))


def relative_frobenius(A, B) -> float:
    return float(np.linalg.norm(A - B) / np.linalg.norm(B))


def _energy_stat(x, y):
    from scipy.spatial.distance import cdist

    return 2 * cdist(x, y).mean() - cdist(x, x).mean() - cdist(y, y).mean()


def energy_normality_test(x: np.ndarray, n_boot: int = 200, seed: int = 11) -> tuple:
    """Energy-distance test of multivariate normality with estimated mean and covariance.

    The sample is whitened with its own mean and covariance and compared
    with a large standard normal sample; the null distribution comes from
    a parametric bootstrap that repeats the whitening.  Returns (statistic, p-value).
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    n, d = x.shape

    def whiten(a):
        c = a - a.mean(axis=0)
        L = np.linalg.cholesky(np.atleast_2d(np.cov(c, rowvar=False)))
        return np.linalg.solve(L, c.T).T

    ref = rng.standard_normal((4 * n, d))
    t0 = _energy_stat(whiten(x), ref)
    null = np.array([_energy_stat(whiten(rng.standard_normal((n, d))), ref) for _ in range(n_boot)])
    return float(t0), float((1 + np.sum(null >= t0)) / (n_boot + 1))


def normality_tests(deltas: np.ndarray, Q: np.ndarray, rel_cut: float = 1e-3, alpha: float = 0.01) -> dict:
    """Per-coordinate Shapiro-Wilk (Holm-adjusted) and the energy test on the leading principal components of Q."""
    sd = deltas.std(axis=0)
    live = np.flatnonzero(sd > 0)
    sw = [float(stats.shapiro(deltas[:, i]).pvalue) for i in live]
    order = np.argsort(sw)
    m = len(sw)
    holm = np.empty(m)
    run = 0.0
    for r, i in enumerate(order):
        run = max(run, min(1.0, (m - r) * sw[i]))
        holm[i] = run
    lam, U = np.linalg.eigh(Q)
    lead = np.argsort(lam)[::-1]
    # whitening needs a nonsingular sample covariance: at most M - 2 components
    dims = min(int(np.sum(lam > rel_cut * lam.max())), len(deltas) - 2)
    if dims >= 1:
        e_stat, e_p = energy_normality_test(deltas @ U[:, lead[:dims]])
    else:
        e_stat, e_p = float("nan"), float("nan")
        dims = 0
    return dict(shapiro_p=sw, shapiro_holm=holm.tolist(), shapiro_min_adjusted=float(holm.min()) if m else 1.0,
                energy_stat=e_stat, energy_p=e_p, energy_dims=dims,
                rejected=bool((m and holm.min() < alpha) or (dims and e_p < alpha)), alpha=alpha)


def summary_json(records, Q, labels, probes, extra=None) -> str:
    out = dict(labels=labels, Q=Q.tolist(), probes=[p.as_dict() for p in probes], studies=[])
    for r in records:
        out["studies"].append(dict(N=r.N, M=r.M, mean=r.mean.tolist(), stderr=r.stderr.tolist(),
                                   cov=r.cov.tolist(), rel_frobenius=relative_frobenius(r.cov, Q)))
    if extra:
        out.update(extra)
    return json.dumps(out, indent=1)


def default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))

"""The law-of-large-numbers and central-limit studies.

Both start every run from the same field datum zeta_0: the Coulomb field of
the reference quadrature ensemble with varpi = 0.
"""
from __future__ import annotations

import time as _time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .dynamics import CoupledStepper, SystemState
from .field import init_ground_field
from .fluctuations import (clt_montecarlo, cf_discrepancy, cf_grid, covariance_Q, default_probes, normality_tests,
                           observables, record_base, relative_frobenius, sensitivity_matrix)
from .grid import Grid
from .kernel import RegularizationKernel
from .laws import replica_rng
from .measures import WeightedPointMeasure, transport


def steps_for(T: float, h: float, cfl: float, sample_times) -> tuple:
    """Smallest step count with dt <= cfl h that puts every sample time on the step grid."""
    n = int(np.ceil(T / (cfl * h) - 1e-12))
    while True:
        dt = T / n
        idx = [t / dt for t in sample_times]
        if all(abs(i - round(i)) < 1e-9 for i in idx):
            return n, dt, [int(round(i)) for i in idx]
        n += 1


def evolve_samples(k, ensemble, field, dt, nsteps, sample_steps) -> dict:
    """Phase points of the ensemble after each listed step count."""
    state = SystemState(ensemble.copy(), field.copy())
    st = CoupledStepper(k, state, dt)
    want = set(int(s) for s in sample_steps)
    out = {0: state.ensemble.phase_points()} if 0 in want else {}
    for n in range(1, max(want) + 1):
        st.step()
        if n in want:
            out[n] = state.ensemble.phase_points()
    return out


@dataclass
class CompressedReference:
    """Consecutive groups of `group` reference atoms replaced by their centroid.

    W1(mu, reference) lies within value +- delta where delta is the
    transport cost of the compression itself.
    """

    measure: WeightedPointMeasure
    delta: float


def compress(points: np.ndarray, weights: np.ndarray, group: int) -> CompressedReference:
    n = len(weights)
    if n % group:
        raise ValueError("reference size must be a multiple of the group size")
    P = points.reshape(n // group, group, -1)
    W = weights.reshape(n // group, group)
    c = np.einsum("gi,gid->gd", W, P) / W.sum(axis=1, keepdims=True)
    delta = float(np.sum(W * np.linalg.norm(P - c[:, None, :], axis=2)))
    return CompressedReference(WeightedPointMeasure(c, W.sum(axis=1)), delta)


@dataclass
class LLNResult:
    Ns: list
    times: list
    distances: np.ndarray  # (len(Ns), replicas, len(times))
    gaps: np.ndarray  # (len(times),) reference compression bracket width
    modes: list
    slopes: list
    monotone: list
    runtime: float
    meta: dict = dc_field(default_factory=dict)

    @property
    def mean(self) -> np.ndarray:
        return self.distances.mean(axis=1)

    def rows(self):
        for i, N in enumerate(self.Ns):
            for j, t in enumerate(self.times):
                d = self.distances[i, :, j]
                yield dict(N=N, t=t, mean=float(d.mean()), std=float(d.std(ddof=1)) if len(d) > 1 else 0.0,
                           min=float(d.min()), max=float(d.max()), gap=float(self.gaps[j]), mode=self.modes[j])


def fit_slope(Ns, values) -> float:
    return float(np.polyfit(np.log(Ns), np.log(values), 1)[0])


def lln_study(k: RegularizationKernel, law, grid: Grid, Ns, replicas: int, times, n_ref: int, group: int,
              master_seed: int, cfl: float = 0.4, progress=None) -> LLNResult:
    """KR distance between N-particle empirical measures and the reference solution."""
    t0 = _time.time()
    if n_ref < 8 * max(Ns):
        raise ValueError("the reference needs at least 8 x the largest N atoms")
    T = max(times)
    nsteps, dt, sample_steps = steps_for(T, grid.h, cfl, times)
    ref_e = law.quadrature(n_ref)
    zeta0 = init_ground_field(k, grid, ref_e.q, ref_e.weight, support_radius=law.support_radius + k.radius)
    ref = evolve_samples(k, ref_e, zeta0, dt, nsteps, sample_steps)
    comp = [compress(ref[s], ref_e.weight, group) for s in sample_steps]
    D = np.zeros((len(Ns), replicas, len(times)))
    modes = ["compressed-assignment"] * len(times)
    for i, N in enumerate(Ns):
        for r in range(replicas):
            e = law.sample(replica_rng(master_seed, r), N)
            snaps = evolve_samples(k, e, zeta0, dt, nsteps, sample_steps)
            for j, s in enumerate(sample_steps):
                res = transport(WeightedPointMeasure(snaps[s], e.weight), comp[j].measure)
                D[i, r, j] = res.value
                if res.mode != "assignment":
                    modes[j] = f"compressed-{res.mode}"
            if progress:
                progress(N, r)
    mean = D.mean(axis=1)
    slopes = [fit_slope(Ns, mean[:, j]) for j in range(len(times))]
    mono = [bool(np.all(np.diff(mean[:, j]) < 0)) for j in range(len(times))]
    return LLNResult(list(Ns), list(times), D, np.array([2 * c.delta for c in comp]), modes, slopes, mono,
                     _time.time() - t0, dict(n_ref=n_ref, group=group, dt=dt, nsteps=nsteps, grid_n=grid.n,
                                             half_width=grid.half_width))


@dataclass
class CLTResult:
    Ns: list
    records: list
    Q: np.ndarray
    D: np.ndarray
    labels: list
    probes: list
    z_index: np.ndarray  # columns belonging to the test particle
    cf_points: np.ndarray
    cf: list
    cf_slope: float
    normality: dict
    runtime: float
    meta: dict = dc_field(default_factory=dict)

    def mean_check(self, rec, nsig: float = 3.0) -> bool:
        z = rec.mean[self.z_index] / rec.stderr[self.z_index]
        return bool(np.all(np.abs(z) <= nsig))


def clt_study(k: RegularizationKernel, law, grid: Grid, Ns, M: int, times, z0, n_ref: int, master_seed: int,
              probes=None, cfl: float = 0.4, threads: int = 1, progress=None) -> CLTResult:
    t0 = _time.time()
    probes = default_probes() if probes is None else list(probes)
    if not probes:
        raise ValueError("empty probe family")
    if M < 2:
        raise ValueError("need M >= 2 replicas")
    T = max(times)
    nsteps, dt, steps = steps_for(T, grid.h, cfl, times)
    ref_e = law.quadrature(n_ref)
    zeta0 = init_ground_field(k, grid, ref_e.q, ref_e.weight, support_radius=law.support_radius + k.radius)
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    base = record_base(k, ref_e, zeta0, dt, T, passive=z0, keep_steps=steps)
    obs_base = observables(grid, steps, base.P - len(z0), probes, labels=[f"{t:g}" for t in times])
    reference = base.observe(obs_base)
    D = sensitivity_matrix(base, obs_base, threads=threads)
    Q = covariance_Q(D, ref_e.weight)
    obs_rel = observables(grid, steps, 0, probes, labels=[f"{t:g}" for t in times])
    recs = []
    for N in Ns:
        recs.append(clt_montecarlo(k, law, zeta0, N, M, dt, nsteps, z0, obs_rel, reference, master_seed,
                                   threads=threads))
        if progress:
            progress(N)
    Z = cf_grid(Q)
    cf = [cf_discrepancy(r.deltas, Q, Z) for r in recs]
    slope = fit_slope(Ns, cf) if len(Ns) > 1 else float("nan")
    per = 6 + len(probes)
    z_index = np.array([s * per + c for s in range(len(steps)) for c in range(6)])
    norm = normality_tests(recs[-1].deltas, Q)
    return CLTResult(list(Ns), recs, Q, D, [o.label for o in obs_base], probes, z_index, Z, cf, slope, norm,
                     _time.time() - t0, dict(n_ref=n_ref, dt=dt, nsteps=nsteps, steps=steps, grid_n=grid.n,
                                             half_width=grid.half_width, z0=z0.tolist(), reference=reference.tolist(),
                                             frobenius={r.N: relative_frobenius(r.cov, Q) for r in recs}))

"""Conserved functionals, the ground-state energy, a-priori bounds and the Gronwall utility."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .dynamics import SystemState
from .field import deposit, field_energy, grad_energy, pi_energy
from .kernel import RegularizationKernel
from .particles import smeared_potential, velocity

BOUND_TOL = 1e-6


@dataclass
class DiagnosticsRecord:
    time: float
    M: float
    P: np.ndarray
    J: np.ndarray
    E: float
    kinetic: float
    coupling: float
    field: float
    grad_norm: float  # ||psi||_{H^1-dot}
    pi_norm: float  # ||varpi||_{L^2}
    particle_P: np.ndarray  # sum_i w_i p_i
    particle_J: np.ndarray  # sum_i w_i q_i x p_i
    max_speed: float
    max_p: float
    min_weight: float
    flags: dict = dc_field(default_factory=dict)

    def row(self) -> dict:
        d = dict(time=self.time, M=self.M, E=self.E, kinetic=self.kinetic, coupling=self.coupling,
                 field=self.field, grad_norm=self.grad_norm, pi_norm=self.pi_norm, max_speed=self.max_speed,
                 max_p=self.max_p)
        for name in ("P", "J", "particle_P", "particle_J"):
            for a in range(3):
                d[f"{name}{a + 1}"] = float(getattr(self, name)[a])
        d["min_weight"] = self.min_weight
        for name, ok in self.flags.items():
            d[f"ok_{name}"] = int(bool(ok))
        return d


def functionals(k: RegularizationKernel, state: SystemState) -> DiagnosticsRecord:
    """Mass, momentum, angular momentum and energy of a coupled state.

    Field integrals are node sums over the box.  varpi vanishes outside the
    light cone of the sources, so the static tail adds nothing to P and J;
    its energy is carried by the reference part of the field energy.
    """
    e, f = state.ensemble, state.field
    g = f.grid
    dv = g.cell_volume
    w = e.weight
    gam = np.sqrt(1.0 + np.sum(e.p * e.p, axis=1))
    kinetic = float(np.sum(w * gam))
    coupling = float(np.sum(w * smeared_potential(k, f, e.q))) if e.N else 0.0
    fld = field_energy(f)
    rho = deposit(k, g, e.q, w) if e.N else g.zeros()
    gpsi = g.gradient(f.psi)
    pP = np.sum(w[:, None] * e.p, axis=0)
    pJ = np.sum(w[:, None] * np.cross(e.q, e.p), axis=0)
    fP = np.array([dv * np.sum(f.pi * gpsi[a]) for a in range(3)])
    X, Y, Z = g.axes()
    xg = (X, Y, Z)
    cr = [xg[1] * gpsi[2] - xg[2] * gpsi[1], xg[2] * gpsi[0] - xg[0] * gpsi[2], xg[0] * gpsi[1] - xg[1] * gpsi[0]]
    fJ = np.array([dv * np.sum(cr[a] * f.pi) for a in range(3)])
    speeds = np.linalg.norm(velocity(e.p), axis=1) if e.N else np.zeros(1)
    return DiagnosticsRecord(
        time=state.time, M=float(dv * np.sum(rho)), P=pP - fP, J=pJ - fJ, E=kinetic + coupling + fld,
        kinetic=kinetic, coupling=coupling, field=fld, grad_norm=float(np.sqrt(max(2 * grad_energy(f), 0.0))),
        pi_norm=float(np.sqrt(2 * pi_energy(f))), particle_P=pP, particle_J=pJ, max_speed=float(np.max(speeds)),
        max_p=float(np.max(np.linalg.norm(e.p, axis=1))) if e.N else 0.0,
        min_weight=float(np.min(w)) if e.N else 1.0)


def ground_state_energy(k: RegularizationKernel) -> float:
    """E_perp = 1 - (1/8pi) int int rho(x) rho(y) / |x - y| dx dy (unit total mass)."""
    return 1.0 - k.self_energy()


def self_energy_shells(k: RegularizationKernel, nodes: int = 400) -> float:
    """Self-energy through the field instead: 1/2 int |grad psi_rho|^2.

    |grad psi_rho| = m(r) / (4 pi r^2) with m the enclosed mass; the part
    outside the support is 1/(8 pi eps) in closed form.
    """
    from .kernel import _gl

    r, wq = _gl(nodes, 0.0, k.radius)
    m = k.enclosed_mass(r)
    inner = 0.5 * np.sum(wq * m * m / (4 * np.pi * r * r))
    return float(inner + 1.0 / (8 * np.pi * k.radius))


@dataclass
class BoundReport:
    time: float
    checks: dict  # name -> (lhs, rhs, ok)

    @property
    def ok(self) -> bool:
        return all(v[2] for v in self.checks.values())

    def violations(self):
        return [k for k, v in self.checks.items() if not v[2]]


def _le(lhs, rhs, tol=BOUND_TOL):
    return (float(lhs), float(rhs), bool(lhs <= rhs * (1 + tol) + tol * 1e-6 if rhs >= 0 else lhs <= rhs * (1 - tol)))


def apriori_bounds(rec: DiagnosticsRecord, E0: float, Eperp: float, P0=None, J0=None, R: float | None = None,
                   mass: float = 1.0, tol: float = BOUND_TOL) -> BoundReport:
    """Energy-based bounds, speed bound and (when P0/J0 given) momentum bounds.

    For weighted ensembles the 1/N of the equal-weight case is replaced by
    the smallest weight divided by the total mass.
    """
    dE = max(E0 - Eperp, 0.0)
    c = {}
    c["grad_norm"] = _le(rec.grad_norm ** 2, 4 + 4 * E0 - 8 * Eperp, tol)
    c["pi_norm"] = _le(rec.pi_norm ** 2, 2 * E0 - 2 * Eperp, tol)
    c["kinetic"] = _le(rec.kinetic / mass, 1 + E0 - Eperp, tol)
    c["dominance"] = _le(rec.kinetic / mass + 0.5 * rec.pi_norm ** 2, 1 + E0 - Eperp, tol)
    lo = 6 * Eperp - 3 * E0 - 3
    c["coupling_upper"] = _le(rec.coupling, E0 - 1, tol)
    c["coupling_lower"] = (float(rec.coupling), lo, bool(rec.coupling >= lo - tol * abs(lo)))
    n_eff = mass / rec.min_weight
    vmax = np.sqrt(1.0 - (1.0 + n_eff * dE) ** -2)
    c["speed"] = _le(rec.max_speed, vmax, tol)
    if P0 is not None:
        c["momentum"] = _le(np.linalg.norm(rec.particle_P),
                            np.linalg.norm(P0) + rec.grad_norm * rec.pi_norm, tol)
    if J0 is not None and R is not None:
        c["angular"] = _le(np.linalg.norm(rec.particle_J),
                           np.linalg.norm(J0) + (R + abs(rec.time)) * rec.grad_norm * rec.pi_norm, tol)
    return BoundReport(rec.time, c)


def growth_bounds(rec: DiagnosticsRecord, EW0: float, p0max: float, rho_l2: float, t: float,
                  tol: float = BOUND_TOL) -> BoundReport:
    """Field-norm and momentum growth bounds valid for any subluminal source motion."""
    s = np.sqrt(2 * EW0)
    c = {
        "field_growth": _le(max(rec.grad_norm, rec.pi_norm), s + rho_l2 * abs(t), tol),
        "p_growth": _le(rec.max_p, p0max + rho_l2 * s * abs(t) + 0.5 * rho_l2 ** 2 * t * t, tol),
    }
    return BoundReport(rec.time, c)


def gronwall_bound(gamma: float, u0: float, v0: float, g, t: float, breakpoints=(), panels: int = 32,
                   order: int = 20) -> float:
    """U(t) = u0 cosh(gt) + v0 sinh(gt)/g + int_0^t cosh(g(t - s)) int_0^s g.

    The double integral is evaluated as int_0^t g(s) sinh(gamma (t - s)) / gamma ds
    (exchange of the order of integration) by composite Gauss-Legendre
    quadrature.  Pass the jump locations of a piecewise-continuous g as
    `breakpoints` so that no panel straddles a jump.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if t < 0:
        raise ValueError("t must be nonnegative")
    base = u0 * np.cosh(gamma * t) + v0 * np.sinh(gamma * t) / gamma
    if t == 0 or g is None:
        return float(base)
    cuts = np.unique(np.concatenate([[0.0, t], [b for b in breakpoints if 0 < b < t]]))
    x, w = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        edges = np.linspace(a, b, max(1, int(np.ceil(panels * (b - a) / t))) + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            s = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            gv = np.array([g(si) for si in s], dtype=float)
            total += 0.5 * (hi - lo) * np.sum(w * gv * np.sinh(gamma * (t - s)) / gamma)
    return float(base + total)


# persistence -----------------------------------------------------------------
def write_diagnostics(records, path) -> Path:
    path = Path(path)
    rows = [r.row() for r in records]
    keys = list(rows[0].keys()) if rows else ["time"]
    for r in rows[1:]:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=keys)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return path


def read_diagnostics(path):
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def record_from_row(r: dict) -> DiagnosticsRecord:
    """Inverse of DiagnosticsRecord.row (flags are dropped)."""
    vec = lambda name: np.array([r[f"{name}{a}"] for a in (1, 2, 3)])
    return DiagnosticsRecord(time=r["time"], M=r["M"], P=vec("P"), J=vec("J"), E=r["E"], kinetic=r["kinetic"],
                             coupling=r["coupling"], field=r["field"], grad_norm=r["grad_norm"], pi_norm=r["pi_norm"],
                             particle_P=vec("particle_P"), particle_J=vec("particle_J"), max_speed=r["max_speed"],
                             max_p=r["max_p"], min_weight=r["min_weight"])

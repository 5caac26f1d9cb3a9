"""Particle ensembles and their equations of motion in a given wave field."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend
from .errors import SupportExceedsDomain
from .field import WaveField, check_cfl, deposit
from .grid import Grid
from .kernel import RegularizationKernel

CSV_COLUMNS = ("id", "q1", "q2", "q3", "p1", "p2", "p3", "weight")


@dataclass
class ParticleEnsemble:
    q: np.ndarray
    p: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float).reshape(-1, 3)
        self.p = np.array(self.p, dtype=float).reshape(-1, 3)
        self.weight = np.array(self.weight, dtype=float).reshape(-1)
        if not (len(self.q) == len(self.p) == len(self.weight)):
            raise ValueError("q, p and weight lengths differ")
        if np.any(self.weight < 0):
            raise ValueError("negative particle weight")

    @classmethod
    def uniform(cls, q, p) -> "ParticleEnsemble":
        q = np.asarray(q, dtype=float).reshape(-1, 3)
        return cls(q, p, np.full(len(q), 1.0 / len(q)))

    @property
    def N(self) -> int:
        return len(self.weight)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weight))

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.q.copy(), self.p.copy(), self.weight.copy())

    def phase_points(self) -> np.ndarray:
        return np.hstack([self.q, self.p])

    def support_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.q, axis=1))) if self.N else 0.0


def velocity(p) -> np.ndarray:
    """v = p / sqrt(1 + |p|^2)."""
    p = np.asarray(p, dtype=float)
    return p / np.sqrt(1.0 + np.sum(p * p, axis=-1, keepdims=True))


def _check(k: RegularizationKernel, grid: Grid, q):
    if not grid.contains_ball(q, k.radius):
        raise SupportExceedsDomain("a particle footprint leaves the field grid")


def force(k: RegularizationKernel, f: WaveField, q) -> np.ndarray:
    """-(rho * grad psi)(q) = int grad rho(y - q) psi(y) dy by node quadrature.

    Accepts one point (3,) or many (N, 3).  The node sum is the exact
    q-gradient of the discrete coupling h^3 sum_x rho(x - q) psi(x), which
    keeps the coupled step Hamiltonian.
    """
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    qq = np.ascontiguousarray(q.reshape(-1, 3))
    _check(k, f.grid, qq)
    g = f.grid
    out = g.cell_volume * backend.gather_grad(qq, np.ascontiguousarray(f.psi), g.lo, g.h, k.radius,
                                              k.tables["grad"])
    return out[0] if single else out


def smeared_potential(k: RegularizationKernel, f: WaveField, q) -> np.ndarray:
    """(rho * psi)(q_i) by node quadrature."""
    qq = np.ascontiguousarray(np.asarray(q, dtype=float).reshape(-1, 3))
    _check(k, f.grid, qq)
    g = f.grid
    return g.cell_volume * backend.gather_value(qq, np.ascontiguousarray(f.psi), g.lo, g.h, k.radius,
                                                k.tables["val"])


def smeared_density(k: RegularizationKernel, e: ParticleEnsemble, grid: Grid) -> np.ndarray:
    """Node samples of sum_i w_i rho(x - q_i)."""
    return deposit(k, grid, e.q, e.weight)


def push_step(k: RegularizationKernel, f: WaveField, e: ParticleEnsemble, dt: float,
              f_end: WaveField | None = None) -> ParticleEnsemble:
    """Kick-drift-kick step in a prescribed field.

    The first half-kick uses `f`, the second `f_end` (the field at the end of
    the step; defaults to `f`, i.e. a frozen field).
    """
    check_cfl(f.grid, dt, f.order)
    out = e.copy()
    out.p += 0.5 * dt * force(k, f, out.q)
    out.q += dt * velocity(out.p)
    out.p += 0.5 * dt * force(k, f if f_end is None else f_end, out.q)
    return out


# persistence -----------------------------------------------------------------
def save_ensemble_csv(e: ParticleEnsemble, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(CSV_COLUMNS)
        for i in range(e.N):
            wr.writerow([i, *map(repr, map(float, e.q[i])), *map(repr, map(float, e.p[i])), repr(float(e.weight[i]))])
    return path


def load_ensemble_csv(path) -> ParticleEnsemble:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(rd.fieldnames or ())
        if missing:
            raise ValueError(f"ensemble CSV lacks columns {sorted(missing)}")
        rows = sorted(rd, key=lambda r: int(r["id"]))
    a = np.array([[float(r[c]) for c in CSV_COLUMNS[1:]] for r in rows]).reshape(-1, 7)
    return ParticleEnsemble(a[:, 0:3], a[:, 3:6], a[:, 6])


def save_ensemble_binary(e: ParticleEnsemble, path, time: float = 0.0) -> Path:
    """Row-major (N, 7) little-endian float64 block [q, p, weight] plus a JSON header."""
    path = Path(path)
    header = dict(format="vlasovwave-ensemble", byte_order="little", dtype="float64", dims=[e.N, 7],
                  columns=list(CSV_COLUMNS[1:]), time=time)
    path.with_suffix(".json").write_text(json.dumps(header, indent=1))
    block = np.hstack([e.q, e.p, e.weight[:, None]]).astype("<f8")
    path.with_suffix(".bin").write_bytes(block.tobytes())
    return path.with_suffix(".bin")


def load_ensemble_binary(path) -> ParticleEnsemble:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    a = np.fromfile(path.with_suffix(".bin"), dtype="<f8").reshape(header["dims"])
    return ParticleEnsemble(a[:, 0:3], a[:, 3:6], a[:, 6])

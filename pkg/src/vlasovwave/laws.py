"""Initial laws f_0 for the LLN and CLT studies: i.i.d. samplers and quadrature nodes.

Random streams are Philox generators keyed by (master seed XOR replica
index), so every replica is reproducible on its own.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .particles import ParticleEnsemble


def replica_rng(master: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(master) ^ int(replica)))


@dataclass(frozen=True)
class RingLaw:
    """Particles on a rotating planar ring; theta ~ U[0, 2 pi) is the only random variable.

    q = r0 (cos t, sin t, 0) + z0 * (0, 0, sin 2t),  p = v0 (-sin t, cos t, 0) + pr (cos t, sin t, 0).
    The law lives on a closed curve in R^6, which keeps its empirical W1
    rate at N^{-1/2} in every dimension of the embedding.
    """

    r0: float = 1.0
    v0: float = 0.3
    pr: float = -0.05
    z0: float = 0.1

    def points(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        c, s = np.cos(t), np.sin(t)
        q = np.stack([self.r0 * c, self.r0 * s, self.z0 * np.sin(2 * t)], axis=-1)
        p = np.stack([-self.v0 * s + self.pr * c, self.v0 * c + self.pr * s, np.zeros_like(t)], axis=-1)
        return np.concatenate([q, p], axis=-1)

    @property
    def support_radius(self) -> float:
        return float(np.hypot(self.r0, self.z0))

    def sample(self, rng: np.random.Generator, n: int) -> ParticleEnsemble:
        z = self.points(rng.uniform(0.0, 2 * np.pi, n))
        return ParticleEnsemble.uniform(z[:, :3], z[:, 3:])

    def quadrature(self, n: int) -> ParticleEnsemble:
        """Equispaced midpoint nodes in theta (spectrally accurate for smooth periodic integrands)."""
        z = self.points(2 * np.pi * (np.arange(n) + 0.5) / n)
        return ParticleEnsemble.uniform(z[:, :3], z[:, 3:])


@dataclass(frozen=True)
class ClusterLaw:
    """Two compact position clusters (uniform in balls) with Gaussian momenta."""

    centers: tuple = ((-0.5, 0.0, 0.0), (0.5, 0.1, 0.0))
    radius: float = 0.3
    fraction: float = 0.5  # mass of the first cluster
    p_sigma: float = 0.05

    @property
    def support_radius(self) -> float:
        return float(max(np.linalg.norm(c) for c in self.centers) + self.radius)

    def _map(self, u):
        """Map uniform (n, 7) variates to phase points (inverse-CDF construction)."""
        first = u[:, 0] < self.fraction
        c = np.where(first[:, None], np.asarray(self.centers[0]), np.asarray(self.centers[1]))
        r = self.radius * np.cbrt(u[:, 1])
        ct = 2 * u[:, 2] - 1
        ph = 2 * np.pi * u[:, 3]
        st = np.sqrt(1 - ct * ct)
        q = c + r[:, None] * np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=1)
        from scipy.special import ndtri

        p = self.p_sigma * ndtri(np.clip(u[:, 4:7], 1e-16, 1 - 1e-16))
        return np.hstack([q, p])

    def sample(self, rng: np.random.Generator, n: int) -> ParticleEnsemble:
        z = self._map(rng.random((n, 7)))
        return ParticleEnsemble.uniform(z[:, :3], z[:, 3:])

    def quadrature(self, n: int, seed: int = 0) -> ParticleEnsemble:
        """Scrambled Sobol nodes pushed through the same map."""
        from scipy.stats import qmc

        u = qmc.Sobol(7, scramble=True, seed=seed).random(n)
        z = self._map(u)
        return ParticleEnsemble.uniform(z[:, :3], z[:, 3:])


LAWS = {"ring": RingLaw, "cluster": ClusterLaw}


def make_law(spec: dict):
    spec = dict(spec or {})
    kind = spec.pop("kind", "ring")
    if kind not in LAWS:
        raise ValueError(f"unknown law {kind!r}; choose from {sorted(LAWS)}")
    if "centers" in spec:
        spec["centers"] = tuple(tuple(map(float, c)) for c in spec["centers"])
    return LAWS[kind](**spec)

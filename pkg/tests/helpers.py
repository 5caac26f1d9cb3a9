"""Random admissible states and small shared scenarios."""
import numpy as np

from vlasovwave.dynamics import SystemState
from vlasovwave.field import init_ground_field
from vlasovwave.particles import ParticleEnsemble


def bump(grid, center, width):
    X, Y, Z = grid.axes()
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2
    return np.exp(-0.5 * r2 / width ** 2)


def random_admissible_state(kernel, grid, rng, max_particles=8, spread=None):
    """Probability-weighted particles in B_1.5, random momenta, ground field plus free perturbations.

    A quarter of the draws sit near the ground state (coincident particles,
    tiny momenta, tiny perturbations) where the floor is tight.
    """
    n = int(rng.integers(1, max_particles + 1))
    near = rng.random() < 0.25
    s = (0.02 if near else 1.0) if spread is None else spread
    c = rng.uniform(-0.3, 0.3, 3)
    q = c + s * rng.uniform(-1, 1, (n, 3)) / np.sqrt(3)
    p = (0.01 if near else rng.uniform(0, 2)) * rng.normal(size=(n, 3))
    w = rng.dirichlet(np.ones(n))
    e = ParticleEnsemble(q, p, w)
    f = init_ground_field(kernel, grid, q, w)
    amp = 1e-3 if near else 0.3
    for _ in range(int(rng.integers(0, 3))):
        ctr = rng.uniform(-1, 1, 3)
        wd = rng.uniform(0.3, 0.8)
        f.psi += amp * rng.normal() * bump(grid, ctr, wd)
        f.pi += amp * rng.normal() * bump(grid, ctr[::-1], wd)
    f.invalidate()
    return SystemState(e, f)

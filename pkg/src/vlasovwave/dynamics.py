"""The coupled particle-field system and its time stepper.

The discrete system is Hamiltonian with

    H = sum_i w_i sqrt(1 + |p_i|^2) + h^3 sum_x rho_q(x) psi(x) + E_W(psi, varpi),

rho_q = sum_i w_i rho(. - q_i).  The step is the Strang splitting
kick(dt/2) drift(dt) kick(dt/2): the kick updates (p, varpi) from
(q, psi), the drift updates (q, psi) from (p, varpi).  Both sub-flows are
exact, so the step is symplectic and time-reversible.  Forces, the deposited
density and L phi at the end of a step are reused by the next first kick.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HorizonError
from .field import WaveField, check_cfl, deposit
from .kernel import RegularizationKernel
from .particles import ParticleEnsemble, force, velocity


@dataclass
class SystemState:
    ensemble: ParticleEnsemble
    field: WaveField
    tests: np.ndarray | None = None  # (M, 6) test-particle phase points, driven but not sourcing

    @property
    def time(self) -> float:
        return self.field.time

    def copy(self) -> "SystemState":
        return SystemState(self.ensemble.copy(), self.field.copy(), None if self.tests is None else self.tests.copy())


def horizon(state: SystemState, k: RegularizationKernel, support_radius: float | None = None) -> float:
    """Largest time for which the frame cannot feel the dynamics.

    Disturbances of (psi - psi_ref, varpi) start inside B_R, R the radius
    containing all kernel footprints, and travel at most at unit speed; the
    Laplacian stencil reaches `order/2` cells further.
    """
    R = state.field.support_radius if support_radius is None else support_radius
    if R <= 0:
        R = state.ensemble.support_radius() + k.radius
    return state.field.grid.half_width - state.field.grid.h * (state.field.order // 2) - R


class CoupledStepper:
    """Kick-drift-kick integrator for a SystemState (advanced in place)."""

    def __init__(self, k: RegularizationKernel, state: SystemState, dt: float, check_horizon: bool = True):
        check_cfl(state.field.grid, dt, state.field.order)
        self.k = k
        self.state = state
        self.dt = float(dt)
        self.t_max = horizon(state, k) + state.time if check_horizon else np.inf
        self._refresh()

    def _refresh(self):
        s = self.state
        self.rho = deposit(self.k, s.field.grid, s.ensemble.q, s.ensemble.weight)
        self.F = force(self.k, s.field, s.ensemble.q) if s.ensemble.N else np.zeros((0, 3))
        self.Ft = force(self.k, s.field, s.tests[:, :3]) if s.tests is not None and len(s.tests) else None

    def _kick(self, h):
        s = self.state
        s.ensemble.p += h * self.F
        if self.Ft is not None:
            s.tests[:, 3:] += h * self.Ft
        s.field.pi += h * (s.field.lap_phi() + s.field.rho_ref - self.rho)

    def step(self):
        s = self.state
        dt = self.dt
        if s.time + dt > self.t_max * (1 + 1e-12):
            raise HorizonError(f"t={s.time + dt:.6g} exceeds the box horizon {self.t_max:.6g}")
        self._kick(0.5 * dt)
        s.ensemble.q += dt * velocity(s.ensemble.p)
        if s.tests is not None:
            s.tests[:, :3] += dt * velocity(s.tests[:, 3:])
        s.field.psi += dt * s.field.pi
        s.field.invalidate()
        s.field.time += dt
        self._refresh()
        self._kick(0.5 * dt)

    def advance(self, nsteps: int, callback=None, every: int = 1):
        """Take nsteps steps; callback(state, step_index) after every `every` steps."""
        for n in range(1, nsteps + 1):
            self.step()
            if callback is not None and n % every == 0:
                callback(self.state, n)
        return self.state


def run(k: RegularizationKernel, state: SystemState, dt: float, T: float, every: int = 1, on_sample=None,
        record_positions: bool = False, check_horizon: bool = True):
    """Integrate to time T (a whole number of steps).

    on_sample(state) is called at t = 0 and after every `every` steps.  With
    record_positions the source positions at every step are returned as an
    array (nsteps + 1, N, 3), and test-particle phase points likewise.
    """
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    t0 = state.time
    stepper = CoupledStepper(k, state, dt, check_horizon=check_horizon)
    qs = [state.ensemble.q.copy()] if record_positions else None
    ts = [state.tests.copy()] if record_positions and state.tests is not None else None
    if on_sample is not None:
        on_sample(state)
    for n in range(1, nsteps + 1):
        stepper.step()
        if record_positions:
            qs.append(state.ensemble.q.copy())
            if ts is not None:
                ts.append(state.tests.copy())
        if on_sample is not None and n % every == 0:
            on_sample(state)
    out = dict(state=state, nsteps=nsteps)
    if record_positions:
        out["positions"] = np.array(qs)
        out["times"] = t0 + dt * np.arange(nsteps + 1)
        if ts is not None:
            out["tests"] = np.array(ts)
    return out

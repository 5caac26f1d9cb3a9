"""The frozen constants agree with the independent routines that produced them."""
import numpy as np

import oracles


def test_rho_oracle_is_normalized():
    from scipy import integrate

    m, _ = integrate.quad(lambda r: 4 * np.pi * r * r * oracles.rho_radial(r), 0, 1, limit=200)
    assert abs(m - 1) < 1e-10


def test_frozen_ground_energy_matches_oracle():
    assert abs(oracles.ground_energy() - oracles.E_PERP) < 1e-9


def test_frozen_rho_l2_matches_oracle():
    assert abs(oracles.rho_l2() - oracles.RHO_L2) < 1e-9


def test_vertex_enumeration_on_hand_example():
    # two atoms at 0 and 2 on a line against one atom at 1
    x = np.array([[0.0], [2.0]])
    y = np.array([[1.0]])
    assert abs(oracles.vertex_enumeration_transport(x, y, [0.5, 0.5], [1.0]) - 1.0) < 1e-15
    # crossing-free matching on a line
    x = np.array([[0.0], [1.0]])
    y = np.array([[0.5], [3.0]])
    assert abs(oracles.vertex_enumeration_transport(x, y, [0.5, 0.5], [0.5, 0.5]) - 1.25) < 1e-15


def test_ode_oracle_reproduces_cosh():
    for g in (0.3, 1.0, 2.5):
        assert abs(oracles.ode_solution(g, 1.0, 0.0, lambda s: 0.0, 3.0) - np.cosh(3 * g)) < 1e-9 * np.cosh(3 * g)

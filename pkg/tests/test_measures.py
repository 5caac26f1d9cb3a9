import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from vlasovwave.measures import (WeightedPointMeasure, bl_distance, brute_force_transport, dirac, empirical,
                                 kr_distance, signed_extension_norm, sinkhorn, transport, cost_matrix)
from vlasovwave.particles import ParticleEnsemble


def random_measure(rng, n, dim=6, uniform=False):
    pts = rng.normal(size=(n, dim))
    w = np.full(n, 1.0 / n) if uniform else rng.dirichlet(np.ones(n))
    return WeightedPointMeasure(pts, w)


measure_seeds = st.tuples(st.integers(1, 8), st.integers(0, 2 ** 32 - 1), st.booleans())


def draw(spec):
    n, seed, uni = spec
    return random_measure(np.random.default_rng(seed), n, uniform=uni)


def test_empirical_measure():
    e = ParticleEnsemble.uniform([[0, 0, 1], [1, 0, 0]], [[0, 0, 0], [0, 1, 0]])
    m = empirical(e)
    assert m.size == 2 and m.total == pytest.approx(1.0)
    assert np.array_equal(m.points[1], [1, 0, 0, 0, 1, 0])


def test_dirac_distances():
    a, b = np.zeros(6), np.array([0.3, 0, 0, 0, 0.4, 0])
    assert kr_distance(dirac(a), dirac(b)) == pytest.approx(0.5)
    assert bl_distance(dirac(a), dirac(b)) == pytest.approx(0.5)
    far = np.array([3.0, 0, 0, 0, 0, 0])
    assert bl_distance(dirac(a), dirac(far)) == 2.0
    assert kr_distance(dirac(a), dirac(a)) == 0.0


def test_dudley_example():
    (x, wx), (y, wy) = oracles.dudley_pair(10)
    mu, nu = WeightedPointMeasure(x, wx), WeightedPointMeasure(y, wy)
    assert kr_distance(mu, nu) == pytest.approx(1.0, abs=1e-12)
    assert bl_distance(mu, nu) == pytest.approx(0.2, abs=1e-12)


def test_two_vs_three_points_brute_force():
    rng = np.random.default_rng(5)
    mu = WeightedPointMeasure(rng.normal(size=(2, 6)), [0.5, 0.5])
    nu = WeightedPointMeasure(rng.normal(size=(3, 6)), [1 / 3] * 3)
    want = oracles.vertex_enumeration_transport(mu.points, nu.points, mu.weights, nu.weights)
    assert kr_distance(mu, nu) == pytest.approx(want, abs=1e-12)


@settings(max_examples=60)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_package_brute_force_matches_oracle(m, n, seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, m), random_measure(rng, n)
    want = oracles.vertex_enumeration_transport(mu.points, nu.points, mu.weights, nu.weights)
    assert brute_force_transport(mu, nu) == pytest.approx(want, abs=1e-12)
    assert kr_distance(mu, nu) == pytest.approx(want, abs=1e-9)


@given(measure_seeds, measure_seeds, measure_seeds)
def test_metric_axioms(a, b, c):
    mu, nu, la = draw(a), draw(b), draw(c)
    for d in (kr_distance, bl_distance):
        assert d(mu, nu) == d(nu, mu) or abs(d(mu, nu) - d(nu, mu)) < 1e-12
        assert d(mu, la) <= d(mu, nu) + d(nu, la) + 1e-9
        assert d(mu, mu) < 1e-12
        assert d(mu, nu) >= 0
    assert bl_distance(mu, nu) <= kr_distance(mu, nu) + 1e-12


def test_identity_of_indiscernibles_up_to_atom_order():
    rng = np.random.default_rng(2)
    mu = random_measure(rng, 5)
    perm = rng.permutation(5)
    nu = WeightedPointMeasure(mu.points[perm], mu.weights[perm])
    assert kr_distance(mu, nu) < 1e-12
    shifted = WeightedPointMeasure(mu.points + 1e-3, mu.weights)
    assert kr_distance(mu, shifted) == pytest.approx(1e-3 * np.sqrt(6), rel=1e-9)


def test_solver_modes():
    rng = np.random.default_rng(0)
    assert transport(random_measure(rng, 6, uniform=True), random_measure(rng, 4, uniform=True)).mode == "assignment"
    assert transport(random_measure(rng, 6), random_measure(rng, 4)).mode == "simplex"


def test_entropic_bracket_contains_exact_value():
    rng = np.random.default_rng(1)
    mu, nu = random_measure(rng, 40), random_measure(rng, 50)
    exact = kr_distance(mu, nu)
    res = sinkhorn(cost_matrix(mu.points, nu.points), mu.weights, nu.weights)
    assert res.mode == "entropic"
    assert res.lower - 1e-12 <= exact <= res.upper + 1e-12
    assert res.gap == pytest.approx(res.upper - res.lower)
    # forcing the approximate mode through `transport`
    res2 = transport(mu, nu, exact_limit=10)
    assert res2.mode == "entropic" and res2.lower - 1e-12 <= exact <= res2.upper + 1e-12


def test_unequal_masses_rejected():
    with pytest.raises(ValueError):
        kr_distance(WeightedPointMeasure(np.zeros((1, 6)), [1.0]), WeightedPointMeasure(np.zeros((1, 6)), [0.5]))


def test_size_limit_enforced():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        transport(random_measure(rng, 30), random_measure(rng, 30), exact_limit=5, approx_limit=100)


def test_signed_extension_norm():
    rng = np.random.default_rng(3)
    mu, nu = random_measure(rng, 4), random_measure(rng, 3)
    assert signed_extension_norm(mu - nu) == pytest.approx(kr_distance(mu, nu), abs=1e-12)
    zero = WeightedPointMeasure(np.zeros((1, 6)), [0.0])
    assert signed_extension_norm(zero) == 0.0
    a = np.array([0.3, -0.4, 0, 1.2, 0, 0])
    c = -0.7
    assert signed_extension_norm(dirac(a, c)) == pytest.approx(abs(c) * np.linalg.norm(a) + abs(c), rel=1e-12)


def test_merged_combines_atoms():
    m = WeightedPointMeasure(np.array([[0.0] * 6, [1.0] * 6, [0.0] * 6]), [0.2, 0.5, 0.3]).merged()
    assert m.size == 2 and sorted(m.weights.tolist()) == [0.5, 0.5]


def test_pushforward_contraction_under_lipschitz_map():
    # a linear map with operator norm L moves measures by at most L times their distance
    rng = np.random.default_rng(4)
    A = rng.normal(size=(6, 6))
    L = np.linalg.norm(A, 2)
    for _ in range(10):
        mu, nu = random_measure(rng, 5), random_measure(rng, 4)
        push = lambda m: WeightedPointMeasure(m.points @ A.T, m.weights)
        assert kr_distance(push(mu), push(nu)) <= L * kr_distance(mu, nu) + 1e-10

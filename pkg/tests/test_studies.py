import numpy as np
import pytest

from vlasovwave.measures import WeightedPointMeasure, kr_distance
from vlasovwave.studies import compress, fit_slope, steps_for


def test_steps_hit_sample_times():
    n, dt, idx = steps_for(2.0, 0.2, 0.4, [0.0, 1.0, 2.0])
    assert dt <= 0.08 + 1e-15 and n * dt == pytest.approx(2.0)
    assert idx == [0, n // 2, n]


def test_compression_bracket():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(64, 6))
    w = np.full(64, 1 / 64)
    c = compress(pts, w, 8)
    assert c.measure.size == 8 and c.measure.total == pytest.approx(1.0)
    full = WeightedPointMeasure(pts, w)
    # the compression moves mass by exactly delta
    assert kr_distance(full, c.measure) <= c.delta + 1e-12
    other = WeightedPointMeasure(rng.normal(size=(16, 6)), np.full(16, 1 / 16))
    d_full, d_comp = kr_distance(other, full), kr_distance(other, c.measure)
    assert abs(d_full - d_comp) <= c.delta + 1e-12
    with pytest.raises(ValueError):
        compress(pts, w, 7)


def test_fit_slope():
    Ns = np.array([64, 128, 256])
    assert fit_slope(Ns, 3.0 * Ns ** -0.5) == pytest.approx(-0.5)

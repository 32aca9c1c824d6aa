import logging
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seismda import physweights as pw
from seismda.errors import ArgumentError, DimensionError

SOURCES = ["2-story", "4-story", "8-story", "20-story"]
TARGET = "12-story"


def oracle_weights(source_vals, target_val, eps):
    """Plain-loop evaluation of softmax(1 / ((1 - u_s/u_t)^2 + eps))."""
    scores = []
    for u in source_vals:
        r = u / target_val
        scores.append(math.exp(1.0 / ((1.0 - r) * (1.0 - r) + eps)))
    total = math.fsum(scores)
    return [s / total for s in scores]


class TestDistance:
    def test_identical_gives_eps(self):
        assert pw.property_distance(3.3, 3.3, 0.05) == 0.05

    def test_mirror_tie_is_exact(self):
        assert pw.property_distance(16.6, 48.6) == pw.property_distance(80.6, 48.6)

    def test_value(self):
        # (16/48.6)^2 + 0.05
        assert pw.property_distance(32.6, 48.6, 0.05) == pytest.approx((16 / 48.6) ** 2 + 0.05,
                                                                       abs=1e-15)
        assert pw.property_distance(32.6, 48.6, 0.05) == pytest.approx(0.158385, abs=1e-6)

    def test_errors(self):
        with pytest.raises(ArgumentError):
            pw.property_distance(1.0, 0.0)
        with pytest.raises(ArgumentError):
            pw.property_distance(1.0, 2.0, eps=0.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.1, 100), st.floats(0.1, 100), st.floats(0.5, 20))
    def test_scale_invariant(self, us, ut, c):
        a = pw.property_distance(us, ut)
        b = pw.property_distance(us * c, ut * c)
        assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


class TestArchetypeWeights:
    @pytest.mark.parametrize("prop", pw.PROPERTY_NAMES)
    def test_oracle(self, prop):
        table = pw.STEEL_ARCHETYPES
        wv = pw.physics_weights(table, TARGET, SOURCES, (prop,))
        ref = oracle_weights([table[s][prop] for s in SOURCES], table[TARGET][prop], 0.05)
        np.testing.assert_allclose(wv.weights, ref, rtol=0, atol=1e-12)
        assert abs(wv.weights.sum() - 1.0) <= 1e-12

    def test_height_tie_and_argmax(self):
        w = pw.physics_weights(pw.STEEL_ARCHETYPES, TARGET, SOURCES, ("H",)).weights
        assert w[1] == w[3]
        assert int(np.argmax(w)) == SOURCES.index("8-story")

    def test_combined_is_mean(self):
        table = pw.STEEL_ARCHETYPES
        h = pw.physics_weights(table, TARGET, SOURCES, ("H",))
        t1 = pw.physics_weights(table, TARGET, SOURCES, ("T1",))
        both = pw.physics_weights(table, TARGET, SOURCES, ("H", "T1"))
        np.testing.assert_allclose(both.weights, (h.weights + t1.weights) / 2, atol=1e-15)
        assert both.properties == ("H", "T1")

    def test_skew_warning(self, caplog):
        with caplog.at_level(logging.WARNING, logger="seismda.physweights"):
            wv = pw.physics_weights(pw.STEEL_ARCHETYPES, TARGET, SOURCES, ("H",))
        assert wv.skewed and "unbalanced" in caplog.text

    def test_target_in_sources(self):
        with pytest.raises(ArgumentError):
            pw.physics_weights(pw.STEEL_ARCHETYPES, TARGET, [TARGET, "2-story"])

    def test_unknown_building(self):
        with pytest.raises(ArgumentError):
            pw.physics_weights(pw.STEEL_ARCHETYPES, TARGET, ["3-story"])

    def test_report(self):
        rep = pw.weight_report(pw.STEEL_ARCHETYPES, TARGET, SOURCES, ("H", "T1"))
        assert set(rep["per_property"]) == {"H", "T1"}
        assert len(rep["combined"]["weights"]) == 4


class TestSingleProperty:
    def test_equal_distances(self):
        np.testing.assert_array_equal(pw.weights_single_property([1.0, 3.0], 2.0).weights, [0.5, 0.5])

    def test_identical_buildings_no_overflow(self):
        w = pw.weights_single_property([5.0] * 3, 5.0, eps=1e-4).weights
        np.testing.assert_allclose(w, 1 / 3, atol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.1, 50), min_size=1, max_size=8), st.floats(0.1, 50),
           st.floats(0.01, 1.0))
    def test_probability_vector(self, sources, target, eps):
        w = pw.weights_single_property(sources, target, eps).weights
        assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-12

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.5, 3.0), min_size=2, max_size=6), st.integers(0, 5))
    def test_monotone_in_distance(self, sources, i):
        i %= len(sources)
        target = 1.0
        if abs(sources[i] - target) < 0.05:
            return
        before = pw.weights_single_property(sources, target).weights[i]
        closer = list(sources)
        closer[i] = target + 0.5 * (sources[i] - target)
        after = pw.weights_single_property(closer, target).weights[i]
        assert after > before

    def test_empty(self):
        with pytest.raises(ArgumentError):
            pw.weights_single_property([], 1.0)


class TestCombinedAndUniform:
    def test_self_average(self):
        v = pw.weights_single_property([1.0, 2.0, 4.0], 2.5)
        np.testing.assert_allclose(pw.weights_combined([v, v]).weights, v.weights, atol=1e-16)

    def test_corners(self):
        np.testing.assert_array_equal(pw.weights_combined([[1.0, 0.0], [0.0, 1.0]]).weights,
                                      [0.5, 0.5])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            pw.weights_combined([[1.0], [0.5, 0.5]])

    @pytest.mark.parametrize("n", [1, 4, 7, 100])
    def test_uniform(self, n):
        w = pw.uniform_weights(n).weights
        assert w.size == n and np.all(w == 1 / n) and abs(w.sum() - 1) <= 1e-12

    def test_uniform_bad(self):
        with pytest.raises(ArgumentError):
            pw.uniform_weights(0)


class TestBound:
    def test_inverse_weights(self):
        d = [0.2, 0.4]
        v = pw.bound_value([0.1, 0.1], d, pw.inverse_divergence_weights(d))
        assert v == pytest.approx(0.1 + 2 / (1 / 0.2 + 1 / 0.4), abs=1e-12)
        assert v == pytest.approx(0.36667, abs=1e-5)

    def test_uniform(self):
        assert pw.bound_value([0.1, 0.1], [0.2, 0.4], pw.uniform_weights(2)) == pytest.approx(0.4)

    def test_single_source(self):
        assert pw.bound_value([0.3], [0.2], [1.0]) == pw.bound_value([0.3], [0.2],
                                                                      pw.uniform_weights(1))

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            pw.bound_value([0.1], [0.2, 0.3], [0.5, 0.5])

    def test_nonpositive_divergence(self):
        with pytest.raises(ArgumentError):
            pw.bound_value([0.1, 0.1], [0.0, 0.3], [0.5, 0.5])


def random_instance(rng):
    n = rng.randint(1, 8)
    risk = Fraction(rng.randint(0, 100), 100)
    if rng.random() < 0.2:
        d = [Fraction(rng.randint(1, 1000), rng.randint(1, 100))] * n
    else:
        d = [Fraction(rng.randint(1, 1000), rng.randint(1, 100)) for _ in range(n)]
    return [risk] * n, d


def test_inverse_divergence_never_worse_than_uniform():
    rng = random.Random(2024)
    t0 = time.perf_counter()
    equal_seen = unequal_seen = 0
    for _ in range(1000):
        risks, d = random_instance(rng)
        n = len(d)
        inv = pw.bound_value(risks, d, pw.inverse_divergence_weights(d))
        uni = pw.bound_value(risks, d, [Fraction(1, n)] * n)
        assert isinstance(inv, Fraction) and isinstance(uni, Fraction)
        assert inv <= uni
        all_equal = len(set(d)) == 1
        assert (inv == uni) == all_equal
        equal_seen += all_equal
        unequal_seen += not all_equal
    assert equal_seen > 0 and unequal_seen > 0
    assert time.perf_counter() - t0 < 1.0

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stvar.scenarios import ScenarioSpec, generate_truth
from stvar.spatial import (
    WEIGHT_KINDS,
    SiteGeometry,
    canonical_kind,
    pairwise_distances,
    uniform_weights,
    weight_ratio,
    weight_tensor,
)


def loop_distances(pts):
    m = len(pts)
    d = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            if i != j:
                dx = pts[i][0] - pts[j][0]
                dy = pts[i][1] - pts[j][1]
                d[i, j] = math.sqrt(dx * dx + dy * dy)
    return d


class TestDistances:
    def test_single_point(self):
        np.testing.assert_array_equal(pairwise_distances([[0.3, 0.7]]), [[0.0]])

    def test_three_four_five(self):
        d = pairwise_distances([[0, 0], [3, 4]])
        assert d[0, 1] == d[1, 0] == 5.0

    def test_loop_oracle(self, rng):
        pts = rng.uniform(0, 1, (10, 2))
        np.testing.assert_array_equal(pairwise_distances(pts), loop_distances(pts))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            pairwise_distances([[0, np.nan]])


class TestGeometry:
    def test_dmax_and_subset(self, rng):
        pts = rng.uniform(0, 1, (6, 2))
        g = SiteGeometry.from_coords(pts, site_ids=[f"k{i}" for i in range(6)])
        assert g.d_max == pytest.approx(pairwise_distances(pts).max())
        sub = g.subset([4, 1])
        assert sub.site_ids == ("k4", "k1")
        assert sub.distances[0, 1] == g.distances[4, 1]

    def test_validation(self):
        with pytest.raises(ValueError):
            SiteGeometry(np.array([[0.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(ValueError):
            SiteGeometry(np.array([[0.0, -1.0], [1.0, 0.0]]))
        with pytest.raises(ValueError):
            SiteGeometry(np.zeros((2, 2)) + np.array([[0, 1], [1, 0]]), site_ids=("a", "a"))

    def test_asymmetric_override_and_unreachable(self):
        d = np.array([[0.0, 2.0, np.inf], [3.0, 0.0, 1.0], [4.0, np.inf, 0.0]])
        capped = SiteGeometry.from_distance_matrix(d)
        assert capped.distances[0, 2] == 4.0 and capped.d_max == 4.0
        kept = SiteGeometry.from_distance_matrix(d, unreachable="inf")
        w = weight_tensor("exp-lag-dist", 2.0, kept, 2)
        assert np.isinf(w[:, 0, 2]).all() and np.isinf(w[:, 2, 1]).all()
        assert np.isfinite(w[:, 1, 0]).all()


class TestWeights:
    @pytest.fixture
    def geom(self, rng):
        return SiteGeometry.from_coords(rng.uniform(0, 1, (7, 2)))

    @pytest.mark.parametrize("kind", ["exp-lag-dist", "power-lag-dist", "exp-dist-only", "power-of-lag-times-expdist"])
    def test_c_zero_is_lasso(self, geom, kind):
        np.testing.assert_array_equal(weight_tensor(kind, 0.0, geom, 3), uniform_weights(3, 7))

    def test_substitution_examples(self):
        g = SiteGeometry.from_coords([[0.0, 0.0], [1.0, 0.0]])
        w1 = weight_tensor("exp-lag-dist", 2.0, g, 3)
        assert w1[2, 0, 1] == pytest.approx(7.389056, abs=1e-6)
        w2 = weight_tensor("power-lag-dist", 2.0, g, 3)
        assert w2[2, 0, 1] == pytest.approx(4.0, rel=1e-14)

    def test_formulas(self, geom):
        p, c = 3, 1.7
        d, dm = geom.distances, geom.d_max
        for l in range(1, p + 1):
            np.testing.assert_allclose(weight_tensor("wlasso1", c, geom, p)[l - 1], np.exp(c * l * d / (p * dm)))
            np.testing.assert_allclose(weight_tensor("wlasso2", c, geom, p)[l - 1], (1 + l * d / (p * dm)) ** c)
            np.testing.assert_allclose(weight_tensor("wlasso3", c, geom, p)[l - 1], (l / p * np.exp(d / dm)) ** c)
            np.testing.assert_allclose(weight_tensor("wlasso4", c, geom, p)[l - 1], np.exp(c * d / dm))

    @given(st.sampled_from(WEIGHT_KINDS), st.floats(0.01, 30), st.integers(1, 4), st.integers(0, 2**31))
    def test_monotone_and_positive(self, kind, c, p, seed):
        g = SiteGeometry.from_coords(np.random.default_rng(seed).uniform(0, 1, (6, 2)))
        w = weight_tensor(kind, c, g, p)
        assert np.all(w > 0) and np.all(np.isfinite(w))
        order = np.argsort(g.distances.ravel(), kind="stable")
        for l in range(p):
            assert np.all(np.diff(w[l].ravel()[order]) >= -1e-12 * w[l].max())
        if kind != "exp-dist-only":
            assert np.all(np.diff(w, axis=0) >= -1e-12 * w.max())

    def test_errors(self, geom):
        with pytest.raises(ValueError):
            weight_tensor("exp-lag-dist", -1.0, geom, 2)
        with pytest.raises(ValueError):
            weight_tensor("nope", 1.0, geom, 2)
        with pytest.raises(ValueError):
            weight_tensor("exp-lag-dist", 1.0, SiteGeometry(np.zeros((2, 2))), 2)

    def test_aliases(self):
        assert canonical_kind("WLASSO3") == "power-of-lag-times-expdist"


class TestWeightRatio:
    def test_equal_weights(self):
        mask = np.zeros((1, 3, 3), dtype=bool)
        mask[0, 0, 0] = True
        assert weight_ratio(np.ones((1, 3, 3)), mask) == 1.0

    def test_two_levels(self):
        mask = np.eye(3, dtype=bool)[None]
        w = np.where(mask, 0.1, 1.0)
        assert weight_ratio(w, mask) == pytest.approx(0.1)

    def test_scenario_scan(self):
        geom, model = generate_truth(ScenarioSpec(m=15, seed=3))
        w = weight_tensor("exp-lag-dist", 10.0, geom, 1)
        support = model.phis != 0
        on = max(w[idx] for idx in zip(*np.nonzero(support)))
        off = min(w[idx] for idx in zip(*np.nonzero(~support)))
        assert weight_ratio(w, support) == on / off

    def test_empty_complement(self):
        with pytest.raises(ValueError):
            weight_ratio(np.ones((1, 2, 2)), np.ones((1, 2, 2), dtype=bool))

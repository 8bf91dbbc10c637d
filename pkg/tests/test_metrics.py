import math

import numpy as np
import pytest

from geopriv.core import GeoPoint, Poi, PoiSet, offset
from geopriv.features import Feature, FeatureStore
from geopriv.mechanism import PrivacyLevel, RandomSource
from geopriv.metrics import (
    geographic_distances,
    most_likely_user,
    poi_set_distance,
    precision_trial,
    query_precision,
    recall,
    reidentification_rate,
    remap,
    semantic_distances,
)

BASE = GeoPoint(45.0, 5.0)
MEDIUM = PrivacyLevel.from_level(math.log(6), 500.0)


def _poi(dx, dy=0.0, support=2):
    return Poi(centroid=offset(BASE, dx, dy), support=support)


def _poiset(user, *offsets):
    return PoiSet(user, tuple(_poi(dx, dy) for dx, dy in offsets))


class TestRemap:
    def test_coincident_maps_with_zero_distance(self):
        real = _poiset("u", (0, 0), (1000, 0))
        obf = PoiSet("u", (real.pois[0],))
        result = remap(obf, real)
        assert result.pairs[0].real_index == 0
        assert result.pairs[0].distance_m == 0.0

    def test_nearer_neighbor_wins(self):
        real = _poiset("u", (0, 0), (1000, 0))
        obf = _poiset("u", (400, 0))
        result = remap(obf, real)
        assert result.pairs[0].real == real.pois[0]
        assert result.pairs[0].distance_m == pytest.approx(400, rel=0.005)

    def test_equidistant_tie_takes_first_in_order(self):
        # mirrored across the equator so the two distances are bit-identical
        eq = GeoPoint(0.0, 5.0)
        south = Poi(offset(eq, 0, -500), 2)
        north = Poi(offset(eq, 0, 500), 2)
        real = PoiSet("u", (north, south))
        obf = PoiSet("u", (Poi(eq, 2),))
        result = remap(obf, real)
        assert result.pairs[0].real_index == 0
        assert result.pairs[0].real == south  # sorted first by latitude

    def test_empty_real_rejected(self):
        with pytest.raises(ValueError, match="no real POIs"):
            remap(_poiset("u", (0, 0)), PoiSet("u", ()))

    def test_self_remap_is_identity(self):
        real = _poiset("u", (0, 0), (900, 0), (0, 900))
        result = remap(real, real)
        assert [p.real_index for p in result.pairs] == [0, 1, 2]
        assert all(p.distance_m == 0.0 for p in result.pairs)


class TestRecall:
    def test_two_of_three_real_pois_hit(self):
        real = _poiset("u", (0, 0), (2000, 0), (4000, 0))
        obf = _poiset("u", (10, 0), (1990, 0), (30, 10))
        assert recall(obf, real) == pytest.approx(2 / 3)

    def test_identical_sets_give_one(self):
        real = _poiset("u", (0, 0), (2000, 0))
        assert recall(real, real) == 1.0

    def test_empty_obfuscated_gives_zero(self):
        assert recall(PoiSet("u", ()), _poiset("u", (0, 0))) == 0.0


class TestGeographicDistance:
    def test_values(self):
        real = _poiset("u", (0, 0), (5000, 0))
        obf = _poiset("u", (0, 0), (400, 0))
        got = geographic_distances(remap(obf, real))
        assert got[0] == 0.0
        assert got[1] == pytest.approx(400, rel=0.005)


class TestSemanticDistance:
    def _line_store(self, n=40, spacing=120.0):
        feats = [Feature(f"f{i:03d}", offset(BASE, i * spacing, 0), "x") for i in range(n)]
        return FeatureStore.build(feats)

    def test_identical_points_share_neighbourhood(self):
        store = self._line_store()
        real = _poiset("u", (600, 0))
        got = semantic_distances(remap(real, real), store)
        assert got == [0.0]

    def test_disjoint_neighbourhoods(self):
        store = self._line_store(n=60)
        real = _poiset("u", (0, 0))
        obf = _poiset("u", (6000, 0))
        assert semantic_distances(remap(obf, real), store) == [1.0]

    def test_partial_overlap_fraction(self):
        # 15-nearest windows on a uniform line shift feature-for-feature:
        # moving 3 slots shares 12 of 15.
        store = self._line_store(n=60)
        real = _poiset("u", (2400, 0))  # features 14..28 around slot 20
        obf = _poiset("u", (2760, 0))  # shifted by 3 slots
        got = semantic_distances(remap(obf, real), store)
        assert got[0] == pytest.approx(1 - 12 / 15)

    def test_small_store_uses_actual_count(self):
        store = self._line_store(n=5)
        real = _poiset("u", (0, 0))
        assert semantic_distances(remap(real, real), store) == [0.0]

    def test_empty_store_rejected(self):
        with pytest.raises(ValueError, match="feature store"):
            semantic_distances(remap(_poiset("u", (0, 0)), _poiset("u", (0, 0))), FeatureStore.build([]))


class TestPoiSetDistance:
    def test_identical_sets(self):
        a = _poiset("u", (0, 0), (900, 0))
        assert poi_set_distance(a, a) == 0.0

    def test_single_pair(self):
        a = _poiset("u", (0, 0))
        b = _poiset("v", (750, 0))
        assert poi_set_distance(a, b) == pytest.approx(750, rel=0.005)

    def test_hand_evaluated_median(self):
        # real {0, 1000}, obf {0}: directed minima {0, 0, 1000}, median 0
        real = _poiset("u", (0, 0), (1000, 0))
        obf = _poiset("u", (0, 0))
        assert poi_set_distance(obf, real) == 0.0

    def test_symmetry(self):
        gen = np.random.Generator(np.random.PCG64(5))
        for _ in range(50):
            a = PoiSet("a", tuple(_poi(float(gen.uniform(0, 5000)), float(gen.uniform(0, 5000))) for _ in range(int(gen.integers(1, 5)))))
            b = PoiSet("b", tuple(_poi(float(gen.uniform(0, 5000)), float(gen.uniform(0, 5000))) for _ in range(int(gen.integers(1, 5)))))
            assert poi_set_distance(a, b) == poi_set_distance(b, a)

    def test_empty_side_is_infinite(self):
        assert poi_set_distance(PoiSet("u", ()), _poiset("v", (0, 0))) == math.inf


class TestMostLikelyUser:
    def test_exact_match_wins(self):
        R = {
            "alice": _poiset("alice", (0, 0), (2000, 0)),
            "bob": _poiset("bob", (9000, 0), (11000, 0)),
        }
        assert most_likely_user(R["alice"], R) == "alice"
        assert most_likely_user(R["bob"], R) == "bob"

    def test_single_candidate(self):
        R = {"only": _poiset("only", (0, 0))}
        assert most_likely_user(_poiset("x", (99000, 0)), R) == "only"

    def test_tie_takes_smallest_identifier(self):
        same = _poiset("x", (0, 0))
        R = {"zeta": same, "alpha": same}
        assert most_likely_user(same, R) == "alpha"

    def test_translation_invariance(self):
        # shifting every set by the same city-scale displacement keeps the choice
        gen = np.random.Generator(np.random.PCG64(6))
        R = {
            f"u{i}": PoiSet(
                f"u{i}",
                tuple(_poi(float(gen.uniform(0, 8000)), float(gen.uniform(0, 8000))) for _ in range(3)),
            )
            for i in range(5)
        }
        anon = PoiSet("anon", tuple(_poi(float(gen.uniform(0, 8000)), float(gen.uniform(0, 8000))) for _ in range(3)))

        def shift(ps, dx, dy):
            return PoiSet(ps.user, tuple(Poi(offset(p.centroid, dx, dy), p.support) for p in ps.pois))

        for dx, dy in ((300, -500), (-900, 200), (1000, 1000)):
            shifted_R = {u: shift(ps, dx, dy) for u, ps in R.items()}
            assert most_likely_user(shift(anon, dx, dy), shifted_R) == most_likely_user(anon, R)


class TestReidentificationRate:
    def test_identity_linking_with_disjoint_users(self):
        R = {f"u{i}": _poiset(f"u{i}", (i * 3000, 0), (i * 3000, 2000)) for i in range(6)}
        assert reidentification_rate(R, dict(R)) == 1.0

    def test_partial_linking(self):
        R = {
            "a": _poiset("a", (0, 0)),
            "b": _poiset("b", (10000, 0)),
        }
        O = {
            "a": _poiset("a", (100, 0)),      # still closest to a
            "b": _poiset("b", (400, 0)),      # now closest to a: miss
        }
        assert reidentification_rate(R, O) == 0.5

    def test_requires_matching_users(self):
        R = {"a": _poiset("a", (0, 0))}
        with pytest.raises(ValueError):
            reidentification_rate(R, {"b": _poiset("b", (0, 0))})
        with pytest.raises(ValueError):
            reidentification_rate({}, {})


class TestQueryPrecision:
    def _grid_store(self, spacing=100.0, half=30):
        feats = []
        for i in range(-half, half + 1):
            for j in range(-half, half + 1):
                feats.append(
                    Feature(f"g{i + half:02d}_{j + half:02d}", offset(BASE, i * spacing, j * spacing), "restaurant")
                )
        return FeatureStore.build(feats)

    def test_zero_noise_is_exact(self):
        store = self._grid_store(spacing=300.0, half=10)
        got = query_precision(BASE, PrivacyLevel.zero_noise(), store, 500.0, 0.85, RandomSource(1))
        assert got == 1.0

    def test_superset_retrieval_fraction(self):
        # degenerate stream: zero displacement, so the enlarged disc is a
        # superset of the honest one and precision is |real| / |retrieved|
        class _ZeroStream:
            def uniform(self):
                return 0.0

        store = self._grid_store()
        level = PrivacyLevel(0.002)
        from geopriv.mechanism import inverse_radius_cdf

        radius = 500.0
        enlarged = radius + inverse_radius_cdf(level, 0.85)
        real = len(store.range_query(BASE, radius))
        retrieved = len(store.range_query(BASE, enlarged))
        got, n = precision_trial(BASE, level, store, radius, 0.85, _ZeroStream())
        assert n == retrieved
        assert got == pytest.approx(real / retrieved)

    def test_empty_retrieval_convention(self):
        store = FeatureStore.build([Feature("far", offset(BASE, 50_000, 0), "x")])
        got, n = precision_trial(BASE, PrivacyLevel.zero_noise(), store, 100.0, 0.85, RandomSource(2))
        assert (got, n) == (1.0, 0)

    def test_alpha_validation(self):
        store = self._grid_store(half=2)
        with pytest.raises(ValueError):
            query_precision(BASE, MEDIUM, store, 500.0, 0.0, RandomSource(1))
        with pytest.raises(ValueError):
            query_precision(BASE, MEDIUM, store, 0.0, 0.5, RandomSource(1))

    def test_category_filter_applies_to_both_queries(self):
        feats = [
            Feature("r1", offset(BASE, 50, 0), "restaurant"),
            Feature("s1", offset(BASE, 60, 0), "shop"),
            Feature("r2", offset(BASE, 900, 0), "restaurant"),
        ]
        store = FeatureStore.build(feats)
        got = query_precision(BASE, PrivacyLevel.zero_noise(), store, 200.0, 0.85, RandomSource(3), "restaurant")
        assert got == 1.0

    def test_raising_alpha_never_shrinks_retrieval(self):
        from geopriv.mechanism import inverse_radius_cdf

        store = self._grid_store()
        level = PrivacyLevel(0.003)
        z = offset(BASE, 700, -300)  # any fixed obfuscated report
        previous: set[str] = set()
        for alpha in (0.1, 0.5, 0.85, 0.99):
            radius = 500.0 + inverse_radius_cdf(level, alpha)
            ids = {f.id for f in store.range_query(z, radius)}
            assert previous <= ids
            previous = ids

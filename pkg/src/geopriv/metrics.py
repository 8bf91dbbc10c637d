"""Adversary-side evaluation metrics.

Given the POIs an observer extracts from an obfuscated trace and the
user's real POIs, these functions quantify what leaked: every obfuscated
POI is first remapped to the nearest real POI; recall counts how many real
POIs were hit at all, geographic distance measures how far the remapped
guesses are, and semantic distance compares the surrounding map features.
A separate linking attack scores how often an anonymous POI set can be
re-associated with its owner, and the precision metric measures the
utility cost of querying a service through the obfuscation.

All functions are pure given immutable inputs; the only randomness flows
through the explicitly passed source of the precision trial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .core import GeoPoint, Poi, PoiSet, distance
from .features import DEFAULT_TOP_K, FeatureStore
from .mechanism import PrivacyLevel, RandomSource, inverse_radius_cdf, obfuscate_point


@dataclass(frozen=True, slots=True)
class RemapPair:
    """One obfuscated POI with its nearest real POI.

    ``real_index`` is the position of the match in the real PoiSet's
    deterministic ordering (also the tie-breaking order).
    """

    obfuscated: Poi
    real: Poi
    real_index: int
    distance_m: float


@dataclass(frozen=True)
class RemapResult:
    user: str
    pairs: tuple[RemapPair, ...]


def remap(obf: PoiSet, real: PoiSet) -> RemapResult:
    """Map every obfuscated POI to the nearest real POI of the same user.

    Ties go to the earlier POI in the real set's deterministic order.
    Raises when the user has no real POIs; such users are excluded from
    remap-based metrics upstream.
    """
    if len(real) == 0:
        raise ValueError(f"user {real.user!r} has no real POIs")
    pairs = []
    for o in obf.pois:
        best_i = 0
        best_d = distance(o.centroid, real.pois[0].centroid)
        for i, r in enumerate(real.pois[1:], start=1):
            d = distance(o.centroid, r.centroid)
            if d < best_d:
                best_i, best_d = i, d
        pairs.append(RemapPair(o, real.pois[best_i], best_i, best_d))
    return RemapResult(user=obf.user, pairs=tuple(pairs))


def recall_of(result: RemapResult, n_real: int) -> float:
    """Fraction of real POIs receiving at least one remapped POI."""
    return len({p.real_index for p in result.pairs}) / n_real


def recall(obf: PoiSet, real: PoiSet) -> float:
    return recall_of(remap(obf, real), len(real))


def geographic_distances(result: RemapResult) -> list[float]:
    """Distance in metres from each obfuscated POI to its remap target."""
    return [p.distance_m for p in result.pairs]


def semantic_distances(result: RemapResult, store: FeatureStore, k: int = DEFAULT_TOP_K) -> list[float]:
    """Per remapped pair: 1 - overlap of the k nearest features around the
    obfuscated POI versus around its remap target.

    Overlap is by feature id; the denominator is the actual number of
    features returned around the target (relevant only when the store
    holds fewer than k features).
    """
    if len(store) == 0:
        raise ValueError("semantic distance needs a non-empty feature store")
    out = []
    for p in result.pairs:
        around_obf = {f.id for f in store.top_k(p.obfuscated.centroid, k)}
        around_real = [f.id for f in store.top_k(p.real.centroid, k)]
        overlap = sum(1 for fid in around_real if fid in around_obf)
        out.append(1.0 - overlap / len(around_real))
    return out


def poi_set_distance(a: PoiSet, b: PoiSet) -> float:
    """Median of the symmetric directed nearest-neighbour distances.

    For each POI of either set, take its distance to the nearest POI of
    the other set; the score is the median of all those values (mean of
    the two central values on even sizes). Infinite when either side is
    empty, so a user whose POIs were destroyed degrades gracefully instead
    of erroring.
    """
    if len(a) == 0 or len(b) == 0:
        return math.inf
    values = []
    for p in a.pois:
        values.append(min(distance(p.centroid, q.centroid) for q in b.pois))
    for q in b.pois:
        values.append(min(distance(p.centroid, q.centroid) for p in a.pois))
    values.sort()
    m = len(values)
    if m % 2 == 1:
        return values[m // 2]
    return (values[m // 2 - 1] + values[m // 2]) / 2.0


def most_likely_user(anon: PoiSet, real_sets: Mapping[str, PoiSet]) -> str:
    """The known user whose POI set is closest to the anonymous one.

    Ties break towards the smallest user identifier.
    """
    if not real_sets:
        raise ValueError("no candidate users")
    best_user = None
    best_d = math.inf
    for user in sorted(real_sets):
        d = poi_set_distance(anon, real_sets[user])
        if best_user is None or d < best_d:
            best_user, best_d = user, d
    return best_user


def reidentification_rate(
    real_sets: Mapping[str, PoiSet], obf_sets: Mapping[str, PoiSet]
) -> float:
    """Fraction of obfuscated POI sets linked back to the right user.

    ``obf_sets`` is keyed by the true owner for scoring only; each set is
    assigned independently (several may claim the same user, there is no
    one-to-one matching).
    """
    if not real_sets or not obf_sets:
        raise ValueError("re-identification needs non-empty inputs")
    if set(real_sets) != set(obf_sets):
        raise ValueError("real and obfuscated POI sets must cover the same users")
    hits = sum(1 for user, anon in obf_sets.items() if most_likely_user(anon, real_sets) == user)
    return hits / len(obf_sets)


def precision_trial(
    c: GeoPoint,
    level: PrivacyLevel,
    store: FeatureStore,
    radius_m: float,
    alpha: float,
    rng: RandomSource,
    category: str | None = None,
) -> tuple[float, int]:
    """One precision measurement; returns (precision, retrieved count).

    The query is issued from an obfuscated location with its radius
    enlarged by the alpha-quantile of the noise radius, so the true disc
    is fully covered with probability alpha; precision is the fraction of
    retrieved features that the honest query would also have returned.
    A retrieved count of 0 signals the empty-result convention (precision
    1 by definition), which callers should tally separately.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha!r}")
    if not radius_m > 0.0:
        raise ValueError(f"radius must be > 0, got {radius_m!r}")
    z = obfuscate_point(c, level, rng)
    enlargement = inverse_radius_cdf(level, alpha)
    retrieved = store.range_query(z, radius_m + enlargement, category)
    if not retrieved:
        return 1.0, 0
    real_ids = {f.id for f in store.range_query(c, radius_m, category)}
    useless = sum(1 for f in retrieved if f.id not in real_ids)
    return 1.0 - useless / len(retrieved), len(retrieved)


def query_precision(
    c: GeoPoint,
    level: PrivacyLevel,
    store: FeatureStore,
    radius_m: float,
    alpha: float,
    rng: RandomSource,
    category: str | None = None,
) -> float:
    """Precision of one obfuscated range query; see precision_trial."""
    return precision_trial(c, level, store, radius_m, alpha, rng, category)[0]

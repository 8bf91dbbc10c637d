"""Spatially indexed map features for nearest-neighbour and range queries.

The index is a uniform grid keyed by degree cells. Queries run
expand-and-verify: candidate cells are enumerated from an exact bounding
box of the query disc and every candidate is checked with the true
great-circle distance, so results are always identical to a brute-force
scan. Ties on distance are broken by ascending feature id.

The store is immutable after build; concurrent reads are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EARTH_RADIUS_M, GeoPoint, distance

# Default k for neighbourhood similarity queries.
DEFAULT_TOP_K = 15

_DEG_PER_M_LAT = 360.0 / (2.0 * math.pi * EARTH_RADIUS_M)


@dataclass(frozen=True, slots=True)
class Feature:
    """A named map feature (restaurant, shop, ...) at a fixed point."""

    id: str
    point: GeoPoint
    category: str
    name: str = ""


def _norm_lon(lon: float) -> float:
    return (lon + 180.0) % 360.0 - 180.0


class FeatureStore:
    """Immutable feature collection with an exact grid index."""

    def __init__(self, features: list[Feature], cell_size_m: float):
        self._features = features
        self._cell_deg = max(cell_size_m, 1.0) * _DEG_PER_M_LAT
        self._cell_size_m = max(cell_size_m, 1.0)
        self._cells: dict[tuple[int, int], list[int]] = {}
        for i, f in enumerate(features):
            self._cells.setdefault(self._cell_of(f.point), []).append(i)

    @classmethod
    def build(cls, features, cell_size_m: float = 500.0) -> "FeatureStore":
        """Index a feature sequence; duplicate ids are rejected."""
        feats = list(features)
        seen: set[str] = set()
        for f in feats:
            if f.id in seen:
                raise ValueError(f"duplicate feature id: {f.id!r}")
            seen.add(f.id)
        return cls(feats, cell_size_m)

    def __len__(self) -> int:
        return len(self._features)

    def __iter__(self):
        return iter(self._features)

    def _cell_of(self, p: GeoPoint) -> tuple[int, int]:
        return (
            math.floor(p.lat / self._cell_deg),
            math.floor(_norm_lon(p.lon) / self._cell_deg),
        )

    def _cells_for_disc(self, c: GeoPoint, radius_m: float) -> list[tuple[int, int]]:
        """All grid cells that can intersect the closed disc around c.

        Uses the exact spherical-cap bounding box (with a tiny inflation
        for float safety); degenerates to scanning every occupied cell when
        the box would enumerate more cells than the store occupies.
        """
        delta = min(radius_m / EARTH_RADIUS_M * (1.0 + 1e-12) + 1e-15, math.pi)
        dlat = math.degrees(delta)
        lat_lo = c.lat - dlat
        lat_hi = c.lat + dlat
        phi = math.radians(c.lat)
        if lat_lo <= -90.0 or lat_hi >= 90.0 or delta >= math.pi / 2.0 - abs(phi):
            lon_lo, lon_hi = -180.0, 180.0
        else:
            s = min(math.sin(delta) / math.cos(phi), 1.0)
            dlon = math.degrees(math.asin(s)) * (1.0 + 1e-12)
            lon_lo = _norm_lon(c.lon) - dlon
            lon_hi = _norm_lon(c.lon) + dlon

        cd = self._cell_deg
        lat_cells = range(math.floor(max(lat_lo, -90.0) / cd), math.floor(min(lat_hi, 90.0) / cd) + 1)
        if lon_hi - lon_lo >= 360.0:
            lon_ranges = [range(math.floor(-180.0 / cd), math.floor(180.0 / cd) + 1)]
        elif lon_lo < -180.0:
            lon_ranges = [
                range(math.floor(-180.0 / cd), math.floor(lon_hi / cd) + 1),
                range(math.floor((lon_lo + 360.0) / cd), math.floor(180.0 / cd) + 1),
            ]
        elif lon_hi > 180.0:
            lon_ranges = [
                range(math.floor(lon_lo / cd), math.floor(180.0 / cd) + 1),
                range(math.floor(-180.0 / cd), math.floor((lon_hi - 360.0) / cd) + 1),
            ]
        else:
            lon_ranges = [range(math.floor(lon_lo / cd), math.floor(lon_hi / cd) + 1)]

        n_cells = len(lat_cells) * sum(len(r) for r in lon_ranges)
        if n_cells > len(self._cells):
            return list(self._cells)
        out = []
        for la in lat_cells:
            for rng in lon_ranges:
                for lo in rng:
                    key = (la, lo)
                    if key in self._cells:
                        out.append(key)
        return out

    def top_k(self, c: GeoPoint, k: int) -> list[Feature]:
        """The k features nearest to c, distance ascending, ties by id.

        Returns everything when the store holds fewer than k features.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k!r}")
        n = len(self._features)
        if n == 0:
            return []

        gathered: dict[int, float] = {}
        scanned: set[tuple[int, int]] = set()
        radius = self._cell_size_m
        while True:
            for key in self._cells_for_disc(c, radius):
                if key in scanned:
                    continue
                scanned.add(key)
                for i in self._cells[key]:
                    gathered[i] = distance(c, self._features[i].point)
            within = sum(1 for d in gathered.values() if d <= radius)
            if within >= k or len(gathered) == n:
                break
            radius *= 2.0

        order = sorted(gathered, key=lambda i: (gathered[i], self._features[i].id))
        return [self._features[i] for i in order[:k]]

    def range_query(self, c: GeoPoint, radius_m: float, category: str | None = None) -> list[Feature]:
        """All features within the closed ball of radius_m around c,
        optionally restricted to one category; ordered by (distance, id)."""
        if radius_m < 0.0:
            raise ValueError(f"radius must be >= 0, got {radius_m!r}")
        hits: list[tuple[float, str, Feature]] = []
        for key in self._cells_for_disc(c, radius_m):
            for i in self._cells[key]:
                f = self._features[i]
                if category is not None and f.category != category:
                    continue
                d = distance(c, f.point)
                if d <= radius_m:
                    hits.append((d, f.id, f))
        hits.sort(key=lambda h: (h[0], h[1]))
        return [f for _, _, f in hits]


def generate_synthetic_features(
    seed: int,
    bounds: tuple[float, float, float, float],
    density_per_km2: float,
    categories: tuple[str, ...] = ("restaurant", "shop", "cafe", "park"),
) -> list[Feature]:
    """Uniform random features over a bounding box, Poisson-sized.

    ``bounds`` is (lat_min, lon_min, lat_max, lon_max). The expected count
    is density * area; the draw is deterministic for a given seed. A
    desk-scale stand-in for a real map extract.
    """
    lat_min, lon_min, lat_max, lon_max = bounds
    if lat_max < lat_min or lon_max < lon_min:
        raise ValueError("bounds must be (lat_min, lon_min, lat_max, lon_max)")
    if density_per_km2 < 0.0:
        raise ValueError("density must be >= 0")
    if density_per_km2 == 0.0:
        return []
    if not categories:
        raise ValueError("at least one category required")

    mid_phi = math.radians((lat_min + lat_max) / 2.0)
    height_km = (lat_max - lat_min) * 111.32
    width_km = (lon_max - lon_min) * 111.32 * math.cos(mid_phi)
    area_km2 = height_km * width_km

    gen = np.random.Generator(np.random.PCG64(seed))
    count = int(gen.poisson(density_per_km2 * area_km2))
    lats = gen.uniform(lat_min, lat_max, count)
    lons = gen.uniform(lon_min, lon_max, count)
    cats = gen.integers(0, len(categories), count)
    return [
        Feature(
            id=f"syn{i:06d}",
            point=GeoPoint(float(lats[i]), float(lons[i])),
            category=categories[int(cats[i])],
            name=f"{categories[int(cats[i])]} {i}",
        )
        for i in range(count)
    ]

"""Geographic primitives and the trace/POI data model shared by every stage.

Coordinates are WGS84 decimal degrees; all distances are metres of
great-circle arc on a sphere of radius 6 371 000 m. Everything here is an
immutable value or a pure function, so instances can be shared freely
between concurrent workers.

The model is deliberately city-scale: centroids are arithmetic means in
degree space and local offsets use an equirectangular approximation, both
of which are accurate well below the 100 m granularity the evaluation
metrics operate at, but neither is meaningful across the antimeridian or
near the poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

EARTH_RADIUS_M = 6_371_000.0

# Metres per degree of latitude for local tangent-plane offsets.
METERS_PER_DEGREE = 111_320.0

# offset() is undefined this close to the poles (cos(lat) degenerates).
MAX_OFFSET_LAT = 89.0


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """A latitude/longitude pair in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat!r}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon!r}")


@dataclass(frozen=True, slots=True)
class TimestampedLocation:
    """A location observed at UNIX epoch second ``t`` (UTC)."""

    t: int
    point: GeoPoint

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError(f"timestamp before epoch: {self.t!r}")


@dataclass(frozen=True)
class MobilityTrace:
    """One user's time-ordered sequence of observed locations.

    Locations must be sorted by timestamp, non-decreasing; ties keep their
    original relative order. Use :meth:`from_unsorted` when the source
    order is unknown.
    """

    user: str
    locations: tuple[TimestampedLocation, ...]

    def __post_init__(self) -> None:
        locs = tuple(self.locations)
        object.__setattr__(self, "locations", locs)
        for a, b in zip(locs, locs[1:]):
            if b.t < a.t:
                raise ValueError(f"trace for {self.user!r} is not sorted by time")

    @classmethod
    def from_unsorted(cls, user: str, locations: Iterable[TimestampedLocation]) -> "MobilityTrace":
        return cls(user, tuple(sorted(locations, key=lambda loc: loc.t)))

    def __len__(self) -> int:
        return len(self.locations)


@dataclass(frozen=True)
class Dataset:
    """Mobility traces keyed by unique user identifier."""

    traces: dict[str, MobilityTrace]

    def __post_init__(self) -> None:
        for user, trace in self.traces.items():
            if trace.user != user:
                raise ValueError(f"trace user {trace.user!r} does not match key {user!r}")

    @classmethod
    def from_traces(cls, traces: Iterable[MobilityTrace]) -> "Dataset":
        out: dict[str, MobilityTrace] = {}
        for trace in traces:
            if trace.user in out:
                raise ValueError(f"duplicate user identifier: {trace.user!r}")
            out[trace.user] = trace
        return cls(out)

    def users(self) -> list[str]:
        """User identifiers in deterministic (sorted) order."""
        return sorted(self.traces)

    def total_locations(self) -> int:
        return sum(len(t) for t in self.traces.values())


@dataclass(frozen=True, slots=True)
class Poi:
    """Centroid of an area a user visits frequently, with the number of
    merged stays as its support."""

    centroid: GeoPoint
    support: int

    def __post_init__(self) -> None:
        if self.support < 1:
            raise ValueError(f"POI support must be >= 1, got {self.support!r}")


@dataclass(frozen=True)
class PoiSet:
    """A user's POIs in a stable deterministic order (lat, lon, support)."""

    user: str
    pois: tuple[Poi, ...]

    def __post_init__(self) -> None:
        ordered = tuple(
            sorted(self.pois, key=lambda p: (p.centroid.lat, p.centroid.lon, p.support))
        )
        object.__setattr__(self, "pois", ordered)

    def __len__(self) -> int:
        return len(self.pois)


def distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in metres (haversine on the mean-radius sphere)."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    if h > 1.0:
        h = 1.0
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def haversine_m(lat1, lon1, lat2, lon2):
    """Vectorised haversine over degree arrays; same formula as distance()."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = np.radians(np.subtract(lat2, lat1))
    dlam = np.radians(np.subtract(lon2, lon1))
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def centroid(points: Sequence[GeoPoint]) -> GeoPoint:
    """Arithmetic mean of latitudes and longitudes.

    Valid at city scale (points spanning < 100 km, away from the
    antimeridian); raises on an empty input.
    """
    if not points:
        raise ValueError("empty point set")
    lat = sum(p.lat for p in points) / len(points)
    lon = sum(p.lon for p in points) / len(points)
    return GeoPoint(lat, lon)


def offset(p: GeoPoint, dx: float, dy: float) -> GeoPoint:
    """Displace ``p`` by ``dx`` metres east and ``dy`` metres north.

    Equirectangular local approximation, meant for city-scale
    displacements (below ~100 km): round-tripping through ``distance``
    recovers sqrt(dx^2 + dy^2) within 0.5 % for displacements up to 10 km
    at latitudes up to 60 degrees. Longitude wraps at the antimeridian; a
    displacement that leaves the valid latitude range raises through
    GeoPoint.
    """
    if abs(p.lat) > MAX_OFFSET_LAT:
        raise ValueError("polar region unsupported")
    lat = p.lat + dy / METERS_PER_DEGREE
    lon = p.lon + dx / (METERS_PER_DEGREE * math.cos(math.radians(p.lat)))
    lon = (lon + 180.0) % 360.0 - 180.0
    return GeoPoint(lat, lon)

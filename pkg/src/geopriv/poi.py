"""Stay extraction and density-join clustering of stays into POIs.

Phase one walks the trace with a candidate window: a new point is admitted
when its distance to every point already in the window stays within
``max_distance`` (an empty window admits anything). On rejection, the
window is flushed as a stay if it spans at least ``min_time`` seconds,
otherwise its oldest point is dropped and the same point is retried. The
window is therefore always a contiguous slice of the trace, which is what
the implementation exploits.

Phase two runs density-join clustering on the stay centroids: each stay's
neighbourhood (all stays within ``max_distance * merge_factor``, itself
included) forms a cluster when it has at least ``min_pts`` members, and is
unioned with every existing cluster it intersects, chaining overlapping
neighbourhoods together. The returned POIs are the cluster centroids with
the member count as support.

Both phases are deterministic; per-user extraction is pure and can run in
parallel across a dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    EARTH_RADIUS_M,
    GeoPoint,
    MobilityTrace,
    Poi,
    PoiSet,
    centroid,
)


@dataclass(frozen=True)
class ExtractionParams:
    """Knobs of the extraction: minimum dwell time (s), maximum stay
    diameter (m), minimum cluster population, and the merge radius as a
    fraction of max_distance."""

    min_time: int = 3600
    max_distance: float = 250.0
    min_pts: int = 2
    merge_factor: float = 0.75

    def __post_init__(self) -> None:
        if not self.min_time > 0:
            raise ValueError("min_time must be > 0")
        if not self.max_distance > 0:
            raise ValueError("max_distance must be > 0")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")
        if not self.merge_factor > 0:
            raise ValueError("merge_factor must be > 0")

    @property
    def merge_distance(self) -> float:
        return self.max_distance * self.merge_factor


@dataclass(frozen=True, slots=True)
class Stay:
    """A dwell: centroid of the window, its time span, and its size."""

    centroid: GeoPoint
    start_t: int
    end_t: int
    point_count: int


def extract_stays(trace: MobilityTrace, params: ExtractionParams) -> list[Stay]:
    """Extract stays from a time-sorted trace.

    Semantically this is the naive window walk: admit a point when it is
    within max_distance of every window member, otherwise flush the window
    as a stay when it spans min_time, else drop the oldest point and
    retry. Two observations make it fast without changing its output:

    * dropping the oldest point and retrying repeats until every member
      older than the newest violator is gone (the emission check cannot
      newly succeed while popping, because the spanned time only shrinks),
      so one backward scan finds the violator and batches the pops;
    * a bounding box over the window's chord coordinates gives an O(1)
      "definitely fits" test that short-circuits the scan for the long
      stationary runs that dominate real traces. The box may go stale
      (too wide) after pops, which is only ever conservative.

    Distances compare squared 3-D chord lengths against the chord of
    max_distance, which orders point pairs exactly like the great-circle
    distance.
    """
    n = len(trace.locations)
    if n == 0:
        return []

    lats = [loc.point.lat for loc in trace.locations]
    lons = [loc.point.lon for loc in trace.locations]
    ts = [loc.t for loc in trace.locations]
    xs = [0.0] * n
    ys = [0.0] * n
    zs = [0.0] * n
    for j in range(n):
        phi = math.radians(lats[j])
        lam = math.radians(lons[j])
        cp = math.cos(phi) * EARTH_RADIUS_M
        xs[j] = cp * math.cos(lam)
        ys[j] = cp * math.sin(lam)
        zs[j] = math.sin(phi) * EARTH_RADIUS_M
    chord = 2.0 * EARTH_RADIUS_M * math.sin(min(params.max_distance / (2.0 * EARTH_RADIUS_M), math.pi / 2.0))
    chord2 = chord * chord

    def emit(start: int, end: int) -> Stay:
        m = end - start
        return Stay(
            centroid=GeoPoint(math.fsum(lats[start:end]) / m, math.fsum(lons[start:end]) / m),
            start_t=ts[start],
            end_t=ts[end - 1],
            point_count=m,
        )

    stays: list[Stay] = []
    start = 0  # window is the slice [start, i)
    i = 0
    # bounding box of (a superset of) the window's chord coordinates
    bx0 = by0 = bz0 = math.inf
    bx1 = by1 = bz1 = -math.inf
    while i < n:
        x, y, z = xs[i], ys[i], zs[i]
        if i == start:
            # empty window admits by convention
            bx0 = bx1 = x
            by0 = by1 = y
            bz0 = bz1 = z
            i += 1
            continue
        dx = max(bx1 - x, x - bx0)
        dy = max(by1 - y, y - by0)
        dz = max(bz1 - z, z - bz0)
        if dx * dx + dy * dy + dz * dz <= chord2:
            # within max_distance of the whole box, hence of every member
            bx0 = min(bx0, x); bx1 = max(bx1, x)
            by0 = min(by0, y); by1 = max(by1, y)
            bz0 = min(bz0, z); bz1 = max(bz1, z)
            i += 1
            continue
        # scan newest-first: the first violator is the one every pop must
        # outlive; members behind it are already verified compatible
        violator = -1
        sx0 = sx1 = x
        sy0 = sy1 = y
        sz0 = sz1 = z
        for j in range(i - 1, start - 1, -1):
            dx = x - xs[j]
            dy = y - ys[j]
            dz = z - zs[j]
            if dx * dx + dy * dy + dz * dz > chord2:
                violator = j
                break
            if xs[j] < sx0: sx0 = xs[j]
            elif xs[j] > sx1: sx1 = xs[j]
            if ys[j] < sy0: sy0 = ys[j]
            elif ys[j] > sy1: sy1 = ys[j]
            if zs[j] < sz0: sz0 = zs[j]
            elif zs[j] > sz1: sz1 = zs[j]
        if violator < 0:
            # fits every member: admit and refresh the box exactly
            bx0, bx1, by0, by1, bz0, bz1 = sx0, sx1, sy0, sy1, sz0, sz1
            i += 1
        elif ts[i - 1] - ts[start] >= params.min_time:
            stays.append(emit(start, i))
            start = i
        else:
            # pop everything up to the violator, then admit; the scan
            # already verified the surviving members
            start = violator + 1
            bx0, bx1, by0, by1, bz0, bz1 = sx0, sx1, sy0, sy1, sz0, sz1
            i += 1
    if start < n and ts[n - 1] - ts[start] >= params.min_time:
        stays.append(emit(start, n))
    return stays


def dj_cluster(stays: list[Stay], params: ExtractionParams) -> list[Poi]:
    """Merge stays into POI clusters by chained neighbourhood joins.

    Clusters are sets of stay indices; a stay counts as its own neighbour.
    """
    m = len(stays)
    if m == 0:
        return []

    lat = np.fromiter((s.centroid.lat for s in stays), dtype=float, count=m)
    lon = np.fromiter((s.centroid.lon for s in stays), dtype=float, count=m)
    phi = np.radians(lat)
    lam = np.radians(lon)
    cos_phi = np.cos(phi)
    merge = params.merge_distance

    clusters: list[set[int]] = []
    for idx in range(m):
        dphi = phi - phi[idx]
        dlam = lam - lam[idx]
        h = np.sin(dphi / 2.0) ** 2 + cos_phi[idx] * cos_phi * np.sin(dlam / 2.0) ** 2
        d = 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
        neighborhood = set(np.flatnonzero(d <= merge).tolist())
        if len(neighborhood) < params.min_pts:
            continue
        kept: list[set[int]] = []
        for cluster in clusters:
            if neighborhood & cluster:
                neighborhood |= cluster
            else:
                kept.append(cluster)
        kept.append(neighborhood)
        clusters = kept

    pois = []
    for cluster in clusters:
        members = [stays[j].centroid for j in sorted(cluster)]
        pois.append(Poi(centroid=centroid(members), support=len(cluster)))
    return pois


def extract_pois(trace: MobilityTrace, params: ExtractionParams) -> PoiSet:
    """Full extraction: stays, then clustering, as a deterministic PoiSet."""
    stays = extract_stays(trace, params)
    return PoiSet(user=trace.user, pois=tuple(dj_cluster(stays, params)))

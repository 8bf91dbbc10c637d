"""Planar-Laplace location obfuscation with explicit, reproducible randomness.

A reported location is the true location displaced by polar noise: the
bearing is uniform and the radius follows the radial marginal of the
two-dimensional Laplace distribution with density eps^2 * r * exp(-eps*r),
i.e. Gamma(shape 2, rate eps). The radius is drawn as the sum of two
exponentials, -(ln u1 + ln u2)/eps, which avoids evaluating Lambert W in
the hot path; the closed-form inverse CDF is still provided because query
radius enlargement needs quantiles of the noise radius.

Units matter: epsilon here is measured in 1/metres and all radii in
metres. Although it plays the same budget role, this epsilon is *not*
comparable with the epsilon of classical differential privacy. Smaller
epsilon means more noise and stronger location privacy.

Each point of a trace is perturbed independently. Correlated points (as in
a dense trace) therefore leak more than the per-point guarantee suggests;
quantifying that gap is precisely what the rest of this package does.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import lambertw

from .core import (
    GeoPoint,
    MAX_OFFSET_LAT,
    METERS_PER_DEGREE,
    MobilityTrace,
    TimestampedLocation,
    offset,
)

TWO_PI = 2.0 * math.pi

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class PrivacyLevel:
    """Noise scale of the mechanism: epsilon in reciprocal metres.

    ``disabled`` marks the distinguished zero-noise configuration used by
    end-to-end identity tests: obfuscation becomes the identity and the
    quantile used for query enlargement becomes 0. It is a switch, not a
    limit of epsilon.
    """

    epsilon: float
    disabled: bool = False

    def __post_init__(self) -> None:
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon!r}")

    @classmethod
    def from_level(cls, level_mass: float, radius_m: float) -> "PrivacyLevel":
        """Derive epsilon = level_mass / radius_m (privacy mass within a radius)."""
        if not level_mass > 0.0:
            raise ValueError(f"level mass must be > 0, got {level_mass!r}")
        if not radius_m > 0.0:
            raise ValueError(f"radius must be > 0, got {radius_m!r}")
        return cls(level_mass / radius_m)

    @classmethod
    def zero_noise(cls) -> "PrivacyLevel":
        return cls(epsilon=math.inf, disabled=True)


class RandomSource:
    """Deterministic uniform stream over [0, 1) seeded by a 64-bit integer.

    The same seed always yields the same stream, which is what makes whole
    experiment runs reproducible. Backed by a PCG64 generator.
    """

    def __init__(self, seed: int):
        if not 0 <= seed <= _SEED_MASK:
            raise ValueError(f"seed must fit in 64 bits, got {seed!r}")
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def uniform(self) -> float:
        return float(self._gen.random())

    def uniforms(self, n: int) -> np.ndarray:
        return self._gen.random(n)


def stable_hash64(label: str) -> int:
    """Platform-independent 64-bit hash of a string label."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(base_seed: int, label: str) -> int:
    """Derive a child seed: base XOR hash(label).

    Used to partition the seed space deterministically: a run stream is
    derived from the master seed and the run index, a per-user stream from
    the run seed and the user id, so results never depend on scheduling.
    """
    return (base_seed ^ stable_hash64(label)) & _SEED_MASK


def sample_radius(level: PrivacyLevel, rng: RandomSource) -> float:
    """One draw of the noise radius: Gamma(2, eps) as a sum of two exponentials.

    Uniforms are mapped to (0, 1] so the logs are always defined; a
    degenerate stream of zeros yields radius 0.
    """
    if level.disabled:
        return 0.0
    u1 = 1.0 - rng.uniform()
    u2 = 1.0 - rng.uniform()
    return -(math.log(u1) + math.log(u2)) / level.epsilon


def sample_radii(level: PrivacyLevel, rng: RandomSource, n: int) -> np.ndarray:
    """Vectorised sample_radius: n independent draws."""
    if level.disabled:
        return np.zeros(n)
    u1 = 1.0 - rng.uniforms(n)
    u2 = 1.0 - rng.uniforms(n)
    return -(np.log(u1) + np.log(u2)) / level.epsilon


def radius_cdf(level: PrivacyLevel, r: float) -> float:
    """P(noise radius <= r) = 1 - (1 + eps*r) * exp(-eps*r)."""
    if r < 0.0:
        raise ValueError(f"radius must be >= 0, got {r!r}")
    if level.disabled:
        return 1.0
    x = level.epsilon * r
    return 1.0 - (1.0 + x) * math.exp(-x)


def inverse_radius_cdf(level: PrivacyLevel, p: float) -> float:
    """The unique radius r with radius_cdf(r) = p, for p in [0, 1).

    Closed form via the lower real branch of the Lambert W function:
    r = -(W_{-1}((p - 1)/e) + 1) / eps.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"probability must be in [0, 1), got {p!r}")
    if p == 0.0 or level.disabled:
        return 0.0
    w = lambertw((p - 1.0) / math.e, k=-1)
    return -(float(w.real) + 1.0) / level.epsilon


def obfuscate_point(p: GeoPoint, level: PrivacyLevel, rng: RandomSource) -> GeoPoint:
    """Report a noisy location for p.

    Draw order is fixed (bearing, then the two radius uniforms) so that a
    freshly seeded source reproduces the same output.
    """
    if level.disabled:
        return p
    theta = TWO_PI * rng.uniform()
    r = sample_radius(level, rng)
    return offset(p, r * math.cos(theta), r * math.sin(theta))


def obfuscate_trace(trace: MobilityTrace, level: PrivacyLevel, rng: RandomSource) -> MobilityTrace:
    """Obfuscate every point of a trace independently.

    User, timestamps and ordering are preserved. Consumes the stream as
    three blocks (bearings, then two uniform blocks for the radii), which
    is deterministic for a given source but not interleaved like repeated
    obfuscate_point calls.
    """
    n = len(trace.locations)
    if level.disabled or n == 0:
        return trace
    lat = np.fromiter((loc.point.lat for loc in trace.locations), dtype=float, count=n)
    lon = np.fromiter((loc.point.lon for loc in trace.locations), dtype=float, count=n)
    if np.any(np.abs(lat) > MAX_OFFSET_LAT):
        raise ValueError("polar region unsupported")

    theta = TWO_PI * rng.uniforms(n)
    r = sample_radii(level, rng, n)
    dx = r * np.cos(theta)
    dy = r * np.sin(theta)
    new_lat = lat + dy / METERS_PER_DEGREE
    new_lon = lon + dx / (METERS_PER_DEGREE * np.cos(np.radians(lat)))
    new_lon = (new_lon + 180.0) % 360.0 - 180.0

    lat_list = new_lat.tolist()
    lon_list = new_lon.tolist()
    locations = tuple(
        TimestampedLocation(loc.t, GeoPoint(lat_list[i], lon_list[i]))
        for i, loc in enumerate(trace.locations)
    )
    return MobilityTrace(trace.user, locations)

"""Loaders for mobility-trace datasets and CSV serialization.

Three trace sources are supported:

* the canonical CSV format (header ``user_id,timestamp,lat,lon``), which is
  also what every other command consumes;
* San-Francisco-cabs-style directories: one whitespace-separated file per
  taxi (``latitude longitude occupancy timestamp``), newest record first,
  with the taxi id in the file name;
* Geolife-style directories: one directory per user containing PLT files
  (six header lines, then comma-separated records whose first two fields
  are latitude/longitude and whose sixth and seventh are date and time,
  interpreted as UTC).

Day-level filtering keeps, per user, only UTC calendar days with strictly
more than ``min_locations_per_day`` records, and then only users with at
least ``min_qualifying_days`` such days.

Per-file parsing has no shared state and may run concurrently; the final
per-user merge is a plain reduction.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, TextIO

from .core import Dataset, GeoPoint, MobilityTrace, TimestampedLocation
from .features import Feature
from .core import Poi, PoiSet

logger = logging.getLogger(__name__)

CANONICAL_HEADER = "user_id,timestamp,lat,lon"
FEATURE_HEADER = "feature_id,lat,lon,category,name"
POI_HEADER = "user_id,lat,lon,support"

# Fraction of malformed lines tolerated before canonical input is
# considered corrupt rather than merely noisy.
MALFORMED_TOLERANCE = 0.01

_EPOCH_ORDINAL = date(1970, 1, 1).toordinal()


@dataclass(frozen=True)
class FilterPolicy:
    """Day-quality filter: how many locations make a day count, and how
    many qualifying days keep a user."""

    min_locations_per_day: int = 480
    min_qualifying_days: int = 30

    def __post_init__(self) -> None:
        if self.min_locations_per_day < 1 or self.min_qualifying_days < 1:
            raise ValueError("filter thresholds must be >= 1")


def _fmt_degrees(x: float) -> str:
    # Six decimals when that round-trips exactly, full repr otherwise.
    s = f"{x:.6f}"
    return s if float(s) == x else repr(x)


def _build_dataset(records: Mapping[str, list[TimestampedLocation]]) -> Dataset:
    traces = {
        user: MobilityTrace.from_unsorted(user, locs) for user, locs in records.items()
    }
    return Dataset(traces)


def parse_canonical(lines: Iterable[str] | TextIO) -> Dataset:
    """Parse the canonical trace CSV into a Dataset.

    Traces come out sorted by timestamp. Malformed lines (wrong field
    count, unparseable numbers, out-of-range coordinates, negative
    timestamps) are counted and logged; more than 1 % of them makes the
    input corrupt.
    """
    it = iter(lines)
    try:
        header = next(it)
    except StopIteration:
        raise ValueError("missing header: empty input") from None
    if header.strip() != CANONICAL_HEADER:
        raise ValueError(f"missing or wrong header, expected {CANONICAL_HEADER!r}")

    by_user: dict[str, list[TimestampedLocation]] = defaultdict(list)
    total = 0
    malformed = 0
    for line in it:
        line = line.strip()
        if not line:
            continue
        total += 1
        parts = line.split(",")
        if len(parts) != 4:
            malformed += 1
            continue
        try:
            loc = TimestampedLocation(
                int(parts[1]), GeoPoint(float(parts[2]), float(parts[3]))
            )
        except ValueError:
            malformed += 1
            continue
        by_user[parts[0]].append(loc)

    if malformed:
        logger.warning("canonical input: %d of %d lines malformed", malformed, total)
        if malformed / total > MALFORMED_TOLERANCE:
            raise ValueError(f"corrupt input: {malformed} of {total} lines malformed")
    return _build_dataset(by_user)


def write_canonical(dataset: Dataset, out: TextIO) -> int:
    """Write a Dataset as canonical CSV; returns the record count.

    Users are written in sorted order, locations in trace order, so output
    is deterministic. Round-trips through parse_canonical exactly.
    """
    out.write(CANONICAL_HEADER + "\n")
    count = 0
    for user in dataset.users():
        for loc in dataset.traces[user].locations:
            out.write(
                f"{user},{loc.t},{_fmt_degrees(loc.point.lat)},{_fmt_degrees(loc.point.lon)}\n"
            )
            count += 1
    return count


def parse_sfcabs(directory: str | Path) -> Dataset:
    """Load a directory of per-taxi files (``new_<id>.txt``).

    Source files are reverse-chronological; traces come out ascending.
    Unreadable files are skipped with a warning; malformed lines are
    counted and skipped.
    """
    directory = Path(directory)
    files = sorted(directory.glob("*.txt"))
    if not files:
        raise ValueError(f"no cab files found in {directory}")

    by_user: dict[str, list[TimestampedLocation]] = {}
    malformed = 0
    for path in files:
        taxi = path.stem[4:] if path.stem.startswith("new_") else path.stem
        try:
            text = path.read_text(encoding="utf-8", errors="replace")
        except OSError as exc:
            logger.warning("skipping unreadable cab file %s: %s", path, exc)
            continue
        locs: list[TimestampedLocation] = []
        for line in text.splitlines():
            parts = line.split()
            if len(parts) != 4:
                if line.strip():
                    malformed += 1
                continue
            try:
                locs.append(
                    TimestampedLocation(int(parts[3]), GeoPoint(float(parts[0]), float(parts[1])))
                )
            except ValueError:
                malformed += 1
        by_user[taxi] = locs
    if malformed:
        logger.warning("cab input: %d malformed lines skipped", malformed)
    return _build_dataset(by_user)


def _plt_timestamp(date_s: str, time_s: str) -> int:
    # 'YYYY-MM-DD', 'HH:MM:SS', read as UTC.
    day = date(int(date_s[0:4]), int(date_s[5:7]), int(date_s[8:10]))
    secs = int(time_s[0:2]) * 3600 + int(time_s[3:5]) * 60 + int(time_s[6:8])
    return (day.toordinal() - _EPOCH_ORDINAL) * 86400 + secs


def parse_geolife(directory: str | Path) -> Dataset:
    """Load a Geolife-style tree: one directory per user, PLT files inside.

    Timestamps are rebuilt from the date/time string fields. Files too
    short to carry the six-line header are skipped with a warning;
    malformed records are counted and skipped.
    """
    directory = Path(directory)
    user_dirs = sorted(p for p in directory.iterdir() if p.is_dir())
    if not user_dirs:
        raise ValueError(f"no user directories found in {directory}")

    by_user: dict[str, list[TimestampedLocation]] = {}
    malformed = 0
    for user_dir in user_dirs:
        user = user_dir.name
        locs: list[TimestampedLocation] = []
        for path in sorted(user_dir.rglob("*.plt")):
            try:
                lines = path.read_text(encoding="utf-8", errors="replace").splitlines()
            except OSError as exc:
                logger.warning("skipping unreadable PLT file %s: %s", path, exc)
                continue
            if len(lines) < 6:
                logger.warning("skipping PLT file with malformed header: %s", path)
                continue
            for line in lines[6:]:
                parts = line.split(",")
                if len(parts) < 7:
                    if line.strip():
                        malformed += 1
                    continue
                try:
                    locs.append(
                        TimestampedLocation(
                            _plt_timestamp(parts[5], parts[6].strip()),
                            GeoPoint(float(parts[0]), float(parts[1])),
                        )
                    )
                except ValueError:
                    malformed += 1
        by_user[user] = locs
    if malformed:
        logger.warning("geolife input: %d malformed records skipped", malformed)
    return _build_dataset(by_user)


def filter_dataset(dataset: Dataset, policy: FilterPolicy) -> Dataset:
    """Keep only qualifying UTC days and users with enough of them.

    A day qualifies with strictly more than ``min_locations_per_day``
    records. Idempotent: filtering a filtered dataset changes nothing.
    """
    out: dict[str, MobilityTrace] = {}
    for user, trace in dataset.traces.items():
        day_counts = Counter(loc.t // 86400 for loc in trace.locations)
        good_days = {d for d, c in day_counts.items() if c > policy.min_locations_per_day}
        if len(good_days) < policy.min_qualifying_days:
            continue
        kept = tuple(loc for loc in trace.locations if loc.t // 86400 in good_days)
        out[user] = MobilityTrace(user, kept)
    return Dataset(out)


def parse_features(lines: Iterable[str] | TextIO) -> list[Feature]:
    """Parse the feature CSV (``feature_id,lat,lon,category,name``)."""
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("missing header: empty feature input") from None
    if [h.strip() for h in header] != FEATURE_HEADER.split(","):
        raise ValueError(f"missing or wrong header, expected {FEATURE_HEADER!r}")
    features = []
    for row in reader:
        if not row:
            continue
        if len(row) != 5:
            raise ValueError(f"malformed feature row: {row!r}")
        features.append(
            Feature(id=row[0], point=GeoPoint(float(row[1]), float(row[2])), category=row[3], name=row[4])
        )
    return features


def write_features(features: Iterable[Feature], out: TextIO) -> int:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(FEATURE_HEADER.split(","))
    count = 0
    for f in features:
        writer.writerow([f.id, _fmt_degrees(f.point.lat), _fmt_degrees(f.point.lon), f.category, f.name])
        count += 1
    return count


def parse_pois(lines: Iterable[str] | TextIO) -> dict[str, PoiSet]:
    """Parse the POI CSV (``user_id,lat,lon,support``) into per-user sets."""
    it = iter(lines)
    try:
        header = next(it)
    except StopIteration:
        raise ValueError("missing header: empty POI input") from None
    if header.strip() != POI_HEADER:
        raise ValueError(f"missing or wrong header, expected {POI_HEADER!r}")
    by_user: dict[str, list[Poi]] = defaultdict(list)
    for line in it:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"malformed POI row: {line!r}")
        by_user[parts[0]].append(
            Poi(centroid=GeoPoint(float(parts[1]), float(parts[2])), support=int(parts[3]))
        )
    return {user: PoiSet(user=user, pois=tuple(pois)) for user, pois in by_user.items()}


def write_pois(poi_sets: Mapping[str, PoiSet], out: TextIO) -> int:
    """Write per-user POI sets in deterministic order; returns row count."""
    out.write(POI_HEADER + "\n")
    count = 0
    for user in sorted(poi_sets):
        for poi in poi_sets[user].pois:
            out.write(
                f"{user},{_fmt_degrees(poi.centroid.lat)},{_fmt_degrees(poi.centroid.lon)},{poi.support}\n"
            )
            count += 1
    return count


def dataset_digest(dataset: Dataset) -> str:
    """Short content hash of a dataset via its canonical serialization."""
    import hashlib

    buf = io.StringIO()
    write_canonical(dataset, buf)
    return hashlib.blake2b(buf.getvalue().encode("utf-8"), digest_size=8).hexdigest()

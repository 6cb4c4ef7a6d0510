"""Model features: great-circle distance, log transforms, feature matrix.

The model consumes eleven features per OD pair, in this fixed order:
zone ordinal indices, centroid great-circle distance in miles, raw
populations, and natural-log transforms of establishments, employees and
payroll for both ends.  The regression target is ln(annual trips).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataDomainError
from .ingest import AugmentedRecord

EARTH_RADIUS_MILES = 3958.7613  # mean Earth radius

FEATURE_NAMES = (
    "origin_zone_index",
    "destination_zone_index",
    "GCD",
    "orig_pop",
    "dest_pop",
    "log_orig_est",
    "log_dest_est",
    "log_orig_emp",
    "log_dest_emp",
    "log_orig_ap",
    "log_dest_ap",
)

TARGET_NAME = "log_truck_trips"


def great_circle_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Haversine distance in miles between (lat, lon) points in degrees.

    Spherical Earth of radius ``EARTH_RADIUS_MILES``.  Written so that
    swapping the endpoints gives the bit-identical result.
    """
    for lat, lon in (a, b):
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise DataDomainError(f"coordinate ({lat}, {lon}) out of range")
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    half_dlat = abs(lat2 - lat1) / 2.0
    half_dlon = abs(lon2 - lon1) / 2.0
    h = math.sin(half_dlat) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(half_dlon) ** 2
    return 2.0 * EARTH_RADIUS_MILES * math.asin(min(1.0, math.sqrt(h)))


def log_transform(x: float) -> float:
    """Natural log; raises on non-positive input."""
    if x <= 0:
        raise DataDomainError(f"log_transform requires a positive value, got {x}")
    return math.log(x)


def zone_index_map(zone_ids: Iterable[str]) -> dict[str, int]:
    """Dense ordinal index by lexicographic zone id order."""
    return {zone_id: i for i, zone_id in enumerate(sorted(zone_ids))}


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense feature table plus the log-trip target.

    ``rows`` is (n, 11) float64, ``target`` is ln(annual trips), and
    ``row_keys`` carries the (origin, destination) pair of each row.
    """

    rows: np.ndarray
    target: np.ndarray
    feature_names: tuple[str, ...]
    row_keys: tuple[tuple[str, str], ...]

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def subset(self, indices: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(
            rows=self.rows[indices],
            target=self.target[indices],
            feature_names=self.feature_names,
            row_keys=tuple(self.row_keys[i] for i in indices),
        )

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.feature_names.index(name)]


def build_feature_matrix(
    records: Sequence[AugmentedRecord],
    zone_index: Mapping[str, int],
) -> FeatureMatrix:
    """Assemble the (n, 11) matrix and ln-trip target from joined records.

    Raises :class:`DataDomainError` naming the row and column on the first
    non-positive attribute or trip count.
    """
    n = len(records)
    rows = np.empty((n, len(FEATURE_NAMES)), dtype=np.float64)
    target = np.empty(n, dtype=np.float64)
    keys = []
    for i, r in enumerate(records):
        if r.annual_total_trips < 1:
            raise DataDomainError(f"row {i}, column annual_total_trips: must be >= 1, got {r.annual_total_trips}")
        for column in ("orig_pop", "orig_est", "orig_emp", "orig_ap", "dest_pop", "dest_est", "dest_emp", "dest_ap"):
            if getattr(r, column) <= 0:
                raise DataDomainError(f"row {i}, column {column}: must be positive, got {getattr(r, column)}")
        gcd = great_circle_distance((r.orig_lat, r.orig_lon), (r.dest_lat, r.dest_lon))
        rows[i] = (
            zone_index[r.origin_zone],
            zone_index[r.destination_zone],
            gcd,
            r.orig_pop,
            r.dest_pop,
            math.log(r.orig_est),
            math.log(r.dest_est),
            math.log(r.orig_emp),
            math.log(r.dest_emp),
            math.log(r.orig_ap),
            math.log(r.dest_ap),
        )
        target[i] = math.log(r.annual_total_trips)
        keys.append((r.origin_zone, r.destination_zone))
    return FeatureMatrix(rows, target, FEATURE_NAMES, tuple(keys))


@dataclass(frozen=True)
class StatsSummary:
    mean: float
    median: float
    min: float
    max: float


def descriptive_stats(values: Sequence[float] | np.ndarray) -> StatsSummary:
    """Exact mean/median/min/max; median of an even count averages the
    two middle values."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise DataDomainError("descriptive_stats requires at least one value")
    ordered = np.sort(arr)
    mid = arr.size // 2
    if arr.size % 2 == 1:
        median = float(ordered[mid])
    else:
        median = (float(ordered[mid - 1]) + float(ordered[mid])) / 2.0
    return StatsSummary(
        mean=float(arr.sum() / arr.size),
        median=median,
        min=float(ordered[0]),
        max=float(ordered[-1]),
    )


def table_statistics(records: Sequence[AugmentedRecord]) -> list[tuple[str, StatsSummary]]:
    """Per-variable summaries for the standard report layout: raw trips,
    log trips, GCD, then each end's raw and logged attributes."""
    if not records:
        raise DataDomainError("no records to summarize")
    trips = np.array([r.annual_total_trips for r in records], dtype=np.float64)
    gcd = np.array(
        [great_circle_distance((r.orig_lat, r.orig_lon), (r.dest_lat, r.dest_lon)) for r in records]
    )
    out: list[tuple[str, StatsSummary]] = [
        ("annual_total_trips", descriptive_stats(trips)),
        (TARGET_NAME, descriptive_stats(np.log(trips))),
        ("GCD", descriptive_stats(gcd)),
    ]
    for column in ("orig_pop", "dest_pop", "orig_est", "dest_est", "orig_emp", "dest_emp", "orig_ap", "dest_ap"):
        raw = np.array([getattr(r, column) for r in records], dtype=np.float64)
        out.append((column, descriptive_stats(raw)))
        if column not in ("orig_pop", "dest_pop"):
            out.append((f"log_{column}", descriptive_stats(np.log(raw))))
    order = [
        "annual_total_trips",
        TARGET_NAME,
        "GCD",
        "orig_pop",
        "dest_pop",
        "orig_est",
        "log_orig_est",
        "dest_est",
        "log_dest_est",
        "orig_emp",
        "log_orig_emp",
        "dest_emp",
        "log_dest_emp",
        "orig_ap",
        "log_orig_ap",
        "dest_ap",
        "log_dest_ap",
    ]
    by_name = dict(out)
    return [(name, by_name[name]) for name in order]

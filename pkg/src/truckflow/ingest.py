"""Loading, validation, filtering and joining of OD flow and zone tables.

All tables are UTF-8 CSV with a header row.  Zone and county identifiers
are opaque strings restricted to ``[A-Za-z0-9_-]`` so no quoting is ever
required.  Loading is strict: unknown values fail with the offending row
number rather than being coerced.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DataDomainError,
    DuplicatePairError,
    RowError,
    SchemaError,
    UnknownZoneError,
)

_IDENT_RE = re.compile(r"^[A-Za-z0-9_-]+$")

OD_FLOW_COLUMNS = ("origin_zone", "destination_zone", "annual_total_trips")
ZONE_COLUMNS = (
    "zone_id",
    "centroid_lat",
    "centroid_lon",
    "population",
    "establishments",
    "employees",
    "annual_payroll",
)
CENTROID_COLUMNS = ("zone_id", "centroid_lat", "centroid_lon")
COUNTY_COLUMNS = (
    "county_id",
    "zone_id",
    "population",
    "establishments",
    "employees",
    "annual_payroll",
)


@dataclass(frozen=True)
class ODRecord:
    """One origin/destination pair with its annual truck trip count."""

    origin_zone: str
    destination_zone: str
    annual_total_trips: int


@dataclass(frozen=True)
class ZoneAttributes:
    """Zone centroid plus population and employment attributes."""

    zone_id: str
    centroid_lat: float
    centroid_lon: float
    population: int
    establishments: int
    employees: int
    annual_payroll: int  # thousands of dollars


@dataclass(frozen=True)
class CountyRow:
    """County-level attributes plus the zone the county belongs to."""

    county_id: str
    zone_id: str
    population: int
    establishments: int
    employees: int
    annual_payroll: int


@dataclass(frozen=True)
class AugmentedRecord:
    """An OD record joined with both zones' attributes and centroids."""

    origin_zone: str
    destination_zone: str
    annual_total_trips: int
    orig_lat: float
    orig_lon: float
    dest_lat: float
    dest_lon: float
    orig_pop: int
    orig_est: int
    orig_emp: int
    orig_ap: int
    dest_pop: int
    dest_est: int
    dest_emp: int
    dest_ap: int


@dataclass(frozen=True)
class FilterReport:
    removed_excluded_zone: int
    removed_zero_trips: int
    removed_intrazonal: int
    kept: int


@dataclass(frozen=True)
class AggregationReport:
    zones_filled: int
    zones_without_counties: tuple[str, ...]
    skipped_unknown_zone: int


def _read_rows(path: str | Path, required: Sequence[str]) -> tuple[list[dict[str, str]], list[int]]:
    """Rows as dicts keyed by the required columns, plus 1-based line numbers."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(required)}")
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        pos = {c: header.index(c) for c in required}
        rows, lines = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < len(header):
                raise RowError(lineno, f"{path}: expected {len(header)} fields, got {len(row)}")
            rows.append({c: row[pos[c]].strip() for c in required})
            lines.append(lineno)
        return rows, lines


def _parse_int(value: str, row: int, column: str, minimum: int | None = None) -> int:
    try:
        parsed = int(value)
    except ValueError:
        raise RowError(row, f"column {column}: {value!r} is not an integer")
    if minimum is not None and parsed < minimum:
        raise RowError(row, f"column {column}: {parsed} is below the minimum {minimum}")
    return parsed


def _parse_float(value: str, row: int, column: str, lo: float, hi: float) -> float:
    try:
        parsed = float(value)
    except ValueError:
        raise RowError(row, f"column {column}: {value!r} is not a number")
    if not lo <= parsed <= hi:
        raise RowError(row, f"column {column}: {parsed} outside [{lo}, {hi}]")
    return parsed


def _parse_ident(value: str, row: int, column: str) -> str:
    if not _IDENT_RE.match(value):
        raise RowError(row, f"column {column}: {value!r} is not a valid identifier")
    return value


def load_od_flows(path: str | Path) -> list[ODRecord]:
    """Read od_flows.csv; trips must be non-negative integers, pairs unique."""
    rows, lines = _read_rows(path, OD_FLOW_COLUMNS)
    records: list[ODRecord] = []
    seen: set[tuple[str, str]] = set()
    for row, lineno in zip(rows, lines):
        orig = _parse_ident(row["origin_zone"], lineno, "origin_zone")
        dest = _parse_ident(row["destination_zone"], lineno, "destination_zone")
        trips = _parse_int(row["annual_total_trips"], lineno, "annual_total_trips", minimum=0)
        pair = (orig, dest)
        if pair in seen:
            raise DuplicatePairError(f"duplicate OD pair ({orig}, {dest}) at row {lineno}")
        seen.add(pair)
        records.append(ODRecord(orig, dest, trips))
    return records


def write_od_flows(path: str | Path, records: Iterable[ODRecord]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OD_FLOW_COLUMNS)
        for r in records:
            writer.writerow([r.origin_zone, r.destination_zone, r.annual_total_trips])


def load_zones(path: str | Path) -> list[ZoneAttributes]:
    """Read a full zones.csv (centroids and attributes)."""
    rows, lines = _read_rows(path, ZONE_COLUMNS)
    zones: list[ZoneAttributes] = []
    seen: set[str] = set()
    for row, lineno in zip(rows, lines):
        zone_id = _parse_ident(row["zone_id"], lineno, "zone_id")
        if zone_id in seen:
            raise DuplicatePairError(f"duplicate zone_id {zone_id} at row {lineno}")
        seen.add(zone_id)
        zones.append(
            ZoneAttributes(
                zone_id=zone_id,
                centroid_lat=_parse_float(row["centroid_lat"], lineno, "centroid_lat", -90.0, 90.0),
                centroid_lon=_parse_float(row["centroid_lon"], lineno, "centroid_lon", -180.0, 180.0),
                population=_parse_int(row["population"], lineno, "population", minimum=1),
                establishments=_parse_int(row["establishments"], lineno, "establishments", minimum=1),
                employees=_parse_int(row["employees"], lineno, "employees", minimum=1),
                annual_payroll=_parse_int(row["annual_payroll"], lineno, "annual_payroll", minimum=1),
            )
        )
    return zones


def write_zones(path: str | Path, zones: Iterable[ZoneAttributes]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ZONE_COLUMNS)
        for z in zones:
            writer.writerow(
                [
                    z.zone_id,
                    repr(z.centroid_lat),
                    repr(z.centroid_lon),
                    z.population,
                    z.establishments,
                    z.employees,
                    z.annual_payroll,
                ]
            )


def load_zone_centroids(path: str | Path) -> dict[str, tuple[float, float]]:
    """zone_id -> (lat, lon) from a zones.csv or a centroid-only file."""
    rows, lines = _read_rows(path, CENTROID_COLUMNS)
    centroids: dict[str, tuple[float, float]] = {}
    for row, lineno in zip(rows, lines):
        zone_id = _parse_ident(row["zone_id"], lineno, "zone_id")
        if zone_id in centroids:
            raise DuplicatePairError(f"duplicate zone_id {zone_id} at row {lineno}")
        centroids[zone_id] = (
            _parse_float(row["centroid_lat"], lineno, "centroid_lat", -90.0, 90.0),
            _parse_float(row["centroid_lon"], lineno, "centroid_lon", -180.0, 180.0),
        )
    return centroids


def load_counties(path: str | Path, crosswalk: str | Path | None = None) -> list[CountyRow]:
    """Read counties.csv; a county_id,zone_id crosswalk may supply zone ids.

    If ``crosswalk`` is given its mapping overrides any zone_id column in
    the county file; otherwise the county file must carry zone_id itself.
    """
    mapping: dict[str, str] = {}
    if crosswalk is not None:
        xrows, xlines = _read_rows(crosswalk, ("county_id", "zone_id"))
        for row, lineno in zip(xrows, xlines):
            county = _parse_ident(row["county_id"], lineno, "county_id")
            if county in mapping:
                raise DuplicatePairError(f"duplicate county_id {county} in crosswalk at row {lineno}")
            mapping[county] = _parse_ident(row["zone_id"], lineno, "zone_id")
        required = [c for c in COUNTY_COLUMNS if c != "zone_id"]
    else:
        required = list(COUNTY_COLUMNS)
    rows, lines = _read_rows(path, required)
    counties: list[CountyRow] = []
    seen: set[str] = set()
    for row, lineno in zip(rows, lines):
        county = _parse_ident(row["county_id"], lineno, "county_id")
        if county in seen:
            raise DuplicatePairError(f"duplicate county_id {county} at row {lineno}")
        seen.add(county)
        if crosswalk is not None:
            if county not in mapping:
                raise RowError(lineno, f"county {county} missing from crosswalk")
            zone_id = mapping[county]
        else:
            zone_id = _parse_ident(row["zone_id"], lineno, "zone_id")
        counties.append(
            CountyRow(
                county_id=county,
                zone_id=zone_id,
                population=_parse_int(row["population"], lineno, "population", minimum=0),
                establishments=_parse_int(row["establishments"], lineno, "establishments", minimum=0),
                employees=_parse_int(row["employees"], lineno, "employees", minimum=0),
                annual_payroll=_parse_int(row["annual_payroll"], lineno, "annual_payroll", minimum=0),
            )
        )
    return counties


def load_exclusions(path: str | Path) -> set[str]:
    """One zone id per line; blank lines and ``#`` comments are skipped."""
    excluded: set[str] = set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            excluded.add(_parse_ident(text, lineno, "zone_id"))
    return excluded


def filter_records(
    records: Sequence[ODRecord],
    excluded_zones: Iterable[str] = (),
    exclude_intrazonal: bool = False,
) -> tuple[list[ODRecord], FilterReport]:
    """Drop excluded-zone, zero-trip and (optionally) intrazonal records.

    Rules are applied in that order; a record is counted against the first
    rule it fails.  Filtering is idempotent.
    """
    excluded = set(excluded_zones)
    kept: list[ODRecord] = []
    n_excluded = n_zero = n_intra = 0
    for record in records:
        if record.origin_zone in excluded or record.destination_zone in excluded:
            n_excluded += 1
        elif record.annual_total_trips <= 0:
            n_zero += 1
        elif exclude_intrazonal and record.origin_zone == record.destination_zone:
            n_intra += 1
        else:
            kept.append(record)
    return kept, FilterReport(n_excluded, n_zero, n_intra, len(kept))


def aggregate_counties(
    rows: Sequence[CountyRow],
    zone_ids: Iterable[str],
) -> tuple[dict[str, tuple[int, int, int, int]], AggregationReport]:
    """Sum county attributes into zones.

    Returns ``zone_id -> (population, establishments, employees,
    annual_payroll)`` for every zone that received at least one county,
    plus a report naming empty zones and counting counties whose zone is
    not in the universe (those rows are skipped).
    """
    universe = set(zone_ids)
    totals: dict[str, list[int]] = {}
    skipped = 0
    for row in rows:
        if row.zone_id not in universe:
            skipped += 1
            continue
        acc = totals.setdefault(row.zone_id, [0, 0, 0, 0])
        acc[0] += row.population
        acc[1] += row.establishments
        acc[2] += row.employees
        acc[3] += row.annual_payroll
    empty = tuple(sorted(universe - set(totals)))
    report = AggregationReport(len(totals), empty, skipped)
    return {z: tuple(v) for z, v in totals.items()}, report


def build_zone_table(
    centroids: Mapping[str, tuple[float, float]],
    totals: Mapping[str, tuple[int, int, int, int]],
) -> list[ZoneAttributes]:
    """Combine centroids with aggregated attributes; zones without totals
    are omitted (they cannot satisfy the positivity invariant)."""
    zones = []
    for zone_id in sorted(totals):
        if zone_id not in centroids:
            raise UnknownZoneError(f"no centroid for zone {zone_id}")
        pop, est, emp, ap = totals[zone_id]
        if min(pop, est, emp, ap) < 1:
            raise DataDomainError(f"zone {zone_id}: aggregated attributes must be >= 1, got {totals[zone_id]}")
        lat, lon = centroids[zone_id]
        zones.append(ZoneAttributes(zone_id, lat, lon, pop, est, emp, ap))
    return zones


def join_dataset(
    records: Sequence[ODRecord],
    zones: Sequence[ZoneAttributes],
) -> list[AugmentedRecord]:
    """Attach both zones' attributes and centroids to every record.

    Row order and count are preserved.  Records referencing zones missing
    from the table raise :class:`UnknownZoneError` naming up to 20 of the
    missing identifiers.
    """
    table = {z.zone_id: z for z in zones}
    missing = sorted(
        {r.origin_zone for r in records if r.origin_zone not in table}
        | {r.destination_zone for r in records if r.destination_zone not in table}
    )
    if missing:
        shown = ", ".join(missing[:20])
        more = "" if len(missing) <= 20 else f" (+{len(missing) - 20} more)"
        raise UnknownZoneError(f"{len(missing)} unresolved zone identifier(s): {shown}{more}")
    joined = []
    for r in records:
        o, d = table[r.origin_zone], table[r.destination_zone]
        joined.append(
            AugmentedRecord(
                origin_zone=r.origin_zone,
                destination_zone=r.destination_zone,
                annual_total_trips=r.annual_total_trips,
                orig_lat=o.centroid_lat,
                orig_lon=o.centroid_lon,
                dest_lat=d.centroid_lat,
                dest_lon=d.centroid_lon,
                orig_pop=o.population,
                orig_est=o.establishments,
                orig_emp=o.employees,
                orig_ap=o.annual_payroll,
                dest_pop=d.population,
                dest_est=d.establishments,
                dest_emp=d.employees,
                dest_ap=d.annual_payroll,
            )
        )
    return joined


AUGMENTED_COLUMNS = (
    "origin_zone",
    "destination_zone",
    "annual_total_trips",
    "orig_lat",
    "orig_lon",
    "dest_lat",
    "dest_lon",
    "orig_pop",
    "orig_est",
    "orig_emp",
    "orig_ap",
    "dest_pop",
    "dest_est",
    "dest_emp",
    "dest_ap",
)

_AUG_INT = {"annual_total_trips", "orig_pop", "orig_est", "orig_emp", "orig_ap", "dest_pop", "dest_est", "dest_emp", "dest_ap"}
_AUG_FLOAT = {"orig_lat", "orig_lon", "dest_lat", "dest_lon"}


def write_augmented(path: str | Path, records: Iterable[AugmentedRecord]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AUGMENTED_COLUMNS)
        for r in records:
            writer.writerow(
                [repr(getattr(r, c)) if c in _AUG_FLOAT else getattr(r, c) for c in AUGMENTED_COLUMNS]
            )


def load_augmented(path: str | Path) -> list[AugmentedRecord]:
    rows, lines = _read_rows(path, AUGMENTED_COLUMNS)
    records = []
    for row, lineno in zip(rows, lines):
        kwargs = {}
        for column in AUGMENTED_COLUMNS:
            if column in _AUG_INT:
                kwargs[column] = _parse_int(row[column], lineno, column, minimum=0)
            elif column in _AUG_FLOAT:
                lo, hi = (-90.0, 90.0) if "lat" in column else (-180.0, 180.0)
                kwargs[column] = _parse_float(row[column], lineno, column, lo, hi)
            else:
                kwargs[column] = _parse_ident(row[column], lineno, column)
        records.append(AugmentedRecord(**kwargs))
    return records

"""Load geocoded disaster records and join damage estimates.

Input files use a fixed CSV schema so the rest of the pipeline does not
depend on upstream export formats:

* disaster CSV: ``record_id,disaster_type,year,lat,lon,location_name``
  (extra columns such as ``country`` are kept when present)
* damage CSV: ``record_id,damage_cost``

Rows that cannot be parsed are dropped and described in a rejects report
(``rejects.jsonl``); they never abort a load. :func:`convert_gdis` maps raw
GDIS / EM-DAT exports onto this schema.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from floodlens.geogrid import CoordinateRangeError, grid_of

logger = logging.getLogger(__name__)

DISASTER_COLUMNS = ("record_id", "disaster_type", "year", "lat", "lon", "location_name")
DAMAGE_COLUMNS = ("record_id", "damage_cost")
DEFAULT_WINDOW = (1960, 2018)


class DisasterType(str, Enum):
    # order matters: it fixes the feature column order downstream
    FLOOD = "flood"
    STORM = "storm"
    EARTHQUAKE = "earthquake"
    EXTREME_TEMPERATURE = "extreme_temperature"
    LANDSLIDE = "landslide"
    VOLCANIC_ACTIVITY = "volcanic_activity"
    DROUGHT = "drought"
    MASS_MOVEMENT_DRY = "mass_movement_dry"

    @classmethod
    def parse(cls, raw: str) -> "DisasterType":
        """Case-insensitive; spaces, hyphens and underscores are interchangeable."""
        key = re.sub(r"[()]", " ", raw.strip().lower())
        key = re.sub(r"[\s_\-]+", "_", key).strip("_")
        return cls(key)


class SchemaError(ValueError):
    """Input CSV header does not match the documented schema."""


@dataclass(frozen=True)
class GeoEvent:
    record_id: str
    disaster_type: DisasterType
    year: int
    lat: float
    lon: float
    location_name: str
    damage_cost: float | None
    grid: int
    country: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["disaster_type"] = self.disaster_type.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "GeoEvent":
        d = dict(d)
        d["disaster_type"] = DisasterType(d["disaster_type"])
        return cls(**d)


@dataclass(frozen=True)
class Reject:
    row: int
    record_id: str | None
    reason: str


@dataclass
class EventTable:
    events: tuple[GeoEvent, ...] = ()
    rejects: tuple[Reject, ...] = ()
    n_input_rows: int = 0
    index: dict[tuple[int, int], tuple[GeoEvent, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        self.events = tuple(self.events)
        self.rejects = tuple(self.rejects)
        idx: dict[tuple[int, int], list[GeoEvent]] = defaultdict(list)
        for ev in self.events:
            idx[(ev.grid, ev.year)].append(ev)
        self.index = {k: tuple(v) for k, v in idx.items()}

    def __len__(self) -> int:
        return len(self.events)

    def at(self, grid: int, year: int) -> tuple[GeoEvent, ...]:
        return self.index.get((grid, year), ())

    def for_grid(self, grid: int) -> list[GeoEvent]:
        return [ev for ev in self.events if ev.grid == grid]

    def flood_years(self) -> dict[int, list[int]]:
        """Map grid -> sorted list of years with a flood (one entry per event)."""
        out: dict[int, list[int]] = defaultdict(list)
        for ev in self.events:
            if ev.disaster_type is DisasterType.FLOOD:
                out[ev.grid].append(ev.year)
        return {g: sorted(v) for g, v in out.items()}

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for ev in self.events:
                fh.write(json.dumps(ev.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "EventTable":
        with open(path, encoding="utf-8") as fh:
            events = [GeoEvent.from_dict(json.loads(line)) for line in fh if line.strip()]
        return cls(events, n_input_rows=len(events))

    def write_rejects(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for r in self.rejects:
                fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")


def _check_header(header: list[str] | None, required: Iterable[str], path) -> None:
    if header is None:
        raise SchemaError(f"{path}: empty file")
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: header missing columns {missing}; got {header}")


def _read_damage(path: str | Path) -> dict[str, float]:
    damage: dict[str, float] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, DAMAGE_COLUMNS, path)
        for row in reader:
            rid = (row["record_id"] or "").strip()
            raw = (row["damage_cost"] or "").strip()
            if not rid or not raw:
                continue
            try:
                value = float(raw)
            except ValueError:
                logger.warning("%s: unparseable damage %r for %s", path, raw, rid)
                continue
            if not math.isfinite(value) or value < 0:
                logger.warning("%s: invalid damage %r for %s", path, raw, rid)
                continue
            if rid in damage:
                logger.warning("%s: duplicate damage row for %s, keeping first", path, rid)
                continue
            damage[rid] = value
    return damage


def parse_events(
    disaster_file: str | Path,
    damage_file: str | Path | None = None,
    window: tuple[int, int] = DEFAULT_WINDOW,
) -> EventTable:
    """Parse the disaster CSV (and optional damage CSV) into an EventTable.

    Every input row ends up either as an event or as a reject, so
    ``len(table.events) + len(table.rejects) == table.n_input_rows``.
    """
    disaster_file = Path(disaster_file)
    damage = _read_damage(damage_file) if damage_file is not None else {}
    start, end = window

    events: list[GeoEvent] = []
    rejects: list[Reject] = []
    seen: set[str] = set()
    n_rows = 0
    with open(disaster_file, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, DISASTER_COLUMNS, disaster_file)
        for n_rows, row in enumerate(reader, start=1):
            rid = (row.get("record_id") or "").strip() or None

            def reject(reason: str) -> None:
                rejects.append(Reject(n_rows, rid, reason))

            if rid is None:
                reject("missing record_id")
                continue
            if rid in seen:
                reject("duplicate record_id")
                continue
            try:
                dtype = DisasterType.parse(row.get("disaster_type") or "")
            except ValueError:
                reject(f"unknown disaster_type {row.get('disaster_type')!r}")
                continue
            try:
                year = int(str(row.get("year")).strip())
            except ValueError:
                reject(f"unparseable year {row.get('year')!r}")
                continue
            if not start <= year <= end:
                reject(f"year {year} outside window [{start}, {end}]")
                continue
            try:
                lat = float(row.get("lat"))
                lon = float(row.get("lon"))
                gid = grid_of(lat, lon)
            except (TypeError, ValueError, CoordinateRangeError) as exc:
                reject(f"bad coordinates: {exc}")
                continue
            seen.add(rid)
            country = (row.get("country") or "").strip() or None
            events.append(
                GeoEvent(
                    record_id=rid,
                    disaster_type=dtype,
                    year=year,
                    lat=lat,
                    lon=lon,
                    location_name=(row.get("location_name") or "").strip(),
                    damage_cost=damage.get(rid),
                    grid=gid,
                    country=country,
                )
            )
    if rejects:
        logger.info("%s: %d of %d rows rejected", disaster_file, len(rejects), n_rows)
    return EventTable(events, rejects, n_input_rows=n_rows)


def unique_grids(table: EventTable) -> set[int]:
    return {ev.grid for ev in table.events}


def convert_gdis(
    gdis_csv: str | Path,
    out_disasters: str | Path,
    emdat_csv: str | Path | None = None,
    out_damage: str | Path | None = None,
) -> None:
    """Map raw GDIS (and optionally EM-DAT) exports onto the input schema.

    GDIS has one row per affected location of a disaster; EM-DAT reports one
    damage figure per disaster (``Dis No`` = ``disasterno-iso3``, in thousands
    of US$). The disaster's damage is split evenly over its GDIS rows so grid
    sums do not double count.
    """
    import pandas as pd

    g = pd.read_csv(gdis_csv, low_memory=False)
    g = g.reset_index(drop=True)
    g["dis_no"] = g["disasterno"].astype(str) + "-" + g["iso3"].astype(str)
    g["record_id"] = g["dis_no"] + "#" + g.index.astype(str)
    loc = g["location"].fillna(g.get("adm1")).fillna(g.get("country"))
    out = pd.DataFrame(
        {
            "record_id": g["record_id"],
            "disaster_type": g["disastertype"],
            "year": g["year"],
            "lat": g["latitude"],
            "lon": g["longitude"],
            "location_name": loc.fillna(""),
            "country": g.get("country"),
        }
    )
    out.to_csv(out_disasters, index=False)
    if emdat_csv is None or out_damage is None:
        return
    e = pd.read_csv(emdat_csv, low_memory=False)
    dmg_col = next(c for c in e.columns if c.startswith("Total Damages") and "Adjusted" not in c)
    per_dis = e.set_index("Dis No")[dmg_col].dropna() * 1000.0
    n_rows = g.groupby("dis_no")["record_id"].transform("count")
    share = g["dis_no"].map(per_dis) / n_rows
    dmg = pd.DataFrame({"record_id": g["record_id"], "damage_cost": share}).dropna()
    dmg.to_csv(out_damage, index=False)

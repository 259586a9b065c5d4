"""Per-(grid, year) disaster statistics.

Each row holds, for every disaster type, the number of events in that grid
during that year, a 0/1 occurrence flag and the summed damage cost, followed
by the year itself as a numeric feature (8 * 3 + 1 = 25 columns).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from floodlens.ingest import DisasterType, EventTable

TYPES: tuple[DisasterType, ...] = tuple(DisasterType)
STAT_NAMES: tuple[str, ...] = tuple(
    f"{t.value}_{kind}" for t in TYPES for kind in ("count", "binary", "damage")
)
FEATURE_NAMES: tuple[str, ...] = STAT_NAMES + ("year_feature",)
FLOOD_BINARY_COLUMN = FEATURE_NAMES.index("flood_binary")


@dataclass(frozen=True)
class GridYearFeatures:
    grid: int
    year: int
    counts: tuple[int, ...]
    damages: tuple[float, ...]

    @property
    def binaries(self) -> tuple[int, ...]:
        return tuple(min(c, 1) for c in self.counts)

    @property
    def year_feature(self) -> float:
        return float(self.year)

    def count(self, dtype: DisasterType) -> int:
        return self.counts[TYPES.index(dtype)]

    def damage(self, dtype: DisasterType) -> float:
        return self.damages[TYPES.index(dtype)]

    def vector(self) -> np.ndarray:
        """The 24 statistics followed by the year, in FEATURE_NAMES order."""
        out = np.empty(len(FEATURE_NAMES), dtype=np.float64)
        for i, (c, d) in enumerate(zip(self.counts, self.damages)):
            out[3 * i : 3 * i + 3] = (c, min(c, 1), d)
        out[-1] = self.year
        return out

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.vector().tolist()))


def aggregate_year(table: EventTable, grid: int, year: int) -> GridYearFeatures:
    """Aggregate events of one grid in one year; other years are ignored."""
    counts = [0] * len(TYPES)
    damages = [0.0] * len(TYPES)
    for ev in table.at(grid, year):
        i = TYPES.index(ev.disaster_type)
        counts[i] += 1
        if ev.damage_cost is not None:
            damages[i] += ev.damage_cost
    return GridYearFeatures(grid, year, tuple(counts), tuple(damages))


def feature_matrix(
    table: EventTable, grids: Iterable[int], years: Iterable[int]
) -> list[GridYearFeatures]:
    """Dense rows for every (grid, year) pair, ordered by (grid, year)."""
    years = sorted(set(years))
    return [aggregate_year(table, g, y) for g in sorted(set(grids)) for y in years]


def to_array(rows: list[GridYearFeatures]) -> np.ndarray:
    if not rows:
        return np.empty((0, len(FEATURE_NAMES)))
    return np.vstack([r.vector() for r in rows])


def write_csv(rows: list[GridYearFeatures], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("grid", "year") + FEATURE_NAMES)
        for r in rows:
            vals = []
            for c, d in zip(r.counts, r.damages):
                vals += [c, min(c, 1), repr(float(d))]
            w.writerow([r.grid, r.year, *vals, r.year])


def read_csv(path: str | Path) -> list[GridYearFeatures]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            counts = tuple(int(rec[f"{t.value}_count"]) for t in TYPES)
            damages = tuple(float(rec[f"{t.value}_damage"]) for t in TYPES)
            rows.append(GridYearFeatures(int(rec["grid"]), int(rec["year"]), counts, damages))
    return rows

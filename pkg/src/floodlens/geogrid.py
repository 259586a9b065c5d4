"""1 degree by 1 degree latitude/longitude grid and its integer cell ids.

Ids are dense and row-major from the south-west corner::

    grid_id = (lat_floor + 90) * 360 + (lon_floor + 180)

so ``0`` is the cell at (-90, -180) and ``64799`` the cell at (89, 179).
"""

from __future__ import annotations

import math
from typing import NamedTuple

N_LAT = 180
N_LON = 360
N_CELLS = N_LAT * N_LON


class CoordinateRangeError(ValueError):
    """Coordinate or grid id outside the valid range."""


class GridCell(NamedTuple):
    lat_floor: int
    lon_floor: int


def cell_of(lat: float, lon: float) -> GridCell:
    """Return the cell containing ``(lat, lon)``.

    ``lat == 90`` is clamped into the northernmost row and ``lon == 180``
    wraps to -180 so every valid coordinate lands in exactly one cell.
    """
    lat = float(lat)
    lon = float(lon)
    if not (-90.0 <= lat <= 90.0) or math.isnan(lat):
        raise CoordinateRangeError(f"latitude {lat!r} outside [-90, 90]")
    if not (-180.0 <= lon <= 180.0) or math.isnan(lon):
        raise CoordinateRangeError(f"longitude {lon!r} outside [-180, 180]")
    lat_floor = min(math.floor(lat), 89)
    lon_floor = math.floor(lon)
    if lon_floor == 180:
        lon_floor = -180
    return GridCell(int(lat_floor), int(lon_floor))


def grid_id(cell: GridCell | tuple[int, int]) -> int:
    lat_floor, lon_floor = cell
    if not (-90 <= lat_floor <= 89 and -180 <= lon_floor <= 179):
        raise CoordinateRangeError(f"invalid cell {tuple(cell)!r}")
    return (lat_floor + 90) * N_LON + (lon_floor + 180)


def cell_of_id(gid: int) -> GridCell:
    gid = int(gid)
    if not 0 <= gid < N_CELLS:
        raise CoordinateRangeError(f"grid id {gid} outside [0, {N_CELLS - 1}]")
    row, col = divmod(gid, N_LON)
    return GridCell(row - 90, col - 180)


def grid_of(lat: float, lon: float) -> int:
    """Shortcut for ``grid_id(cell_of(lat, lon))``."""
    return grid_id(cell_of(lat, lon))

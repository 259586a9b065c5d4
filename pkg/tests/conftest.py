from pathlib import Path

import pytest

from floodlens.ingest import DisasterType, EventTable, GeoEvent
from floodlens.geogrid import grid_of

FIXTURES = Path(__file__).parent / "fixtures"


def make_event(rid, dtype, year, lat=10.5, lon=20.5, name="Place", damage=None, country=None):
    return GeoEvent(
        record_id=str(rid),
        disaster_type=DisasterType(dtype),
        year=year,
        lat=lat,
        lon=lon,
        location_name=name,
        damage_cost=damage,
        grid=grid_of(lat, lon),
        country=country,
    )


def table_of(*events) -> EventTable:
    return EventTable(list(events), n_input_rows=len(events))


@pytest.fixture(scope="session")
def tiny():
    from floodlens.textembed import tiny_encoder

    return tiny_encoder(seed=0)

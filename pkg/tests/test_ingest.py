import json

import pytest

from floodlens.geogrid import cell_of, grid_id
from floodlens.ingest import (
    DisasterType,
    EventTable,
    SchemaError,
    parse_events,
    unique_grids,
)

from conftest import FIXTURES, make_event, table_of


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


HEADER = "record_id,disaster_type,year,lat,lon,location_name\n"


def test_single_row_with_damage(tmp_path):
    d = write(tmp_path / "d.csv", HEADER + "X,flood,2001,42.36,-71.06,Boston\n")
    m = write(tmp_path / "m.csv", "record_id,damage_cost\nX,5.0e6\n")
    table = parse_events(d, m)
    (ev,) = table.events
    assert ev.disaster_type is DisasterType.FLOOD
    assert ev.year == 2001
    assert ev.location_name == "Boston"
    assert ev.damage_cost == 5.0e6
    assert ev.grid == grid_id(cell_of(42.36, -71.06))


def test_unknown_type_is_rejected(tmp_path):
    d = write(tmp_path / "d.csv", HEADER + "A,Tsunami,2001,1,1,X\nB,flood,2001,1,1,X\n")
    table = parse_events(d)
    assert len(table.events) == 1
    assert len(table.rejects) == 1
    assert "Tsunami" in table.rejects[0].reason


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("Flood", DisasterType.FLOOD),
        ("extreme temperature", DisasterType.EXTREME_TEMPERATURE),
        ("Extreme_Temperature ", DisasterType.EXTREME_TEMPERATURE),
        ("volcanic activity", DisasterType.VOLCANIC_ACTIVITY),
        ("mass movement (dry)", DisasterType.MASS_MOVEMENT_DRY),
        ("MASS_MOVEMENT_DRY", DisasterType.MASS_MOVEMENT_DRY),
    ],
)
def test_type_parsing(raw, expected):
    assert DisasterType.parse(raw) is expected


def test_bundled_fixture_drops_three_rows(tmp_path):
    table = parse_events(FIXTURES / "disasters_100.csv", FIXTURES / "damage_100.csv")
    assert table.n_input_rows == 100
    assert len(table.events) == 97
    assert len(table.rejects) == 3
    assert len(table.events) + len(table.rejects) == table.n_input_rows
    table.write_rejects(tmp_path / "rejects.jsonl")
    lines = [json.loads(l) for l in (tmp_path / "rejects.jsonl").read_text().splitlines()]
    assert [r["record_id"] for r in lines] == ["R017", "R042", "R088"]
    assert all(r["reason"] for r in lines)


def test_every_grid_matches_coordinates():
    table = parse_events(FIXTURES / "disasters_100.csv", FIXTURES / "damage_100.csv")
    for ev in table.events:
        assert ev.grid == grid_id(cell_of(ev.lat, ev.lon))


def test_damage_join():
    table = parse_events(FIXTURES / "disasters_100.csv", FIXTURES / "damage_100.csv")
    by_id = {ev.record_id: ev for ev in table.events}
    assert by_id["R000"].damage_cost == 1.5e5
    assert by_id["R004"].damage_cost == 7.5e5
    assert by_id["R001"].damage_cost is None


def test_deterministic_serialization(tmp_path):
    a = parse_events(FIXTURES / "disasters_100.csv", FIXTURES / "damage_100.csv")
    b = parse_events(FIXTURES / "disasters_100.csv", FIXTURES / "damage_100.csv")
    a.to_jsonl(tmp_path / "a.jsonl")
    b.to_jsonl(tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    again = EventTable.from_jsonl(tmp_path / "a.jsonl")
    assert again.events == a.events


def test_duplicate_record_and_window(tmp_path):
    d = write(
        tmp_path / "d.csv",
        HEADER + "A,flood,2001,1,1,X\nA,flood,2002,1,1,X\nB,flood,1950,1,1,X\nC,storm,abc,1,1,X\n",
    )
    table = parse_events(d)
    assert [ev.record_id for ev in table.events] == ["A"]
    reasons = [r.reason for r in table.rejects]
    assert reasons[0] == "duplicate record_id"
    assert "outside window" in reasons[1]
    assert "year" in reasons[2]


def test_malformed_header(tmp_path):
    d = write(tmp_path / "d.csv", "id,type,year\n1,flood,2000\n")
    with pytest.raises(SchemaError):
        parse_events(d)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_events(tmp_path / "nope.csv")


def test_index_matches_events():
    table = parse_events(FIXTURES / "disasters_100.csv")
    rebuilt = {}
    for ev in table.events:
        rebuilt.setdefault((ev.grid, ev.year), []).append(ev)
    assert {k: tuple(v) for k, v in rebuilt.items()} == table.index


def test_unique_grids():
    assert unique_grids(table_of()) == set()
    t = table_of(make_event(1, "flood", 2000, 10.1, 20.1), make_event(2, "storm", 2001, 10.9, 20.9))
    assert len(unique_grids(t)) == 1

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from floodlens.featstat import (
    FEATURE_NAMES,
    STAT_NAMES,
    TYPES,
    aggregate_year,
    feature_matrix,
    read_csv,
    to_array,
    write_csv,
)
from floodlens.geogrid import grid_of
from floodlens.ingest import DisasterType

from conftest import make_event, table_of

G = grid_of(10.5, 20.5)


def test_layout():
    assert len(STAT_NAMES) == 24
    assert FEATURE_NAMES[:3] == ("flood_count", "flood_binary", "flood_damage")
    assert FEATURE_NAMES[3:6] == ("storm_count", "storm_binary", "storm_damage")
    assert FEATURE_NAMES[-1] == "year_feature"
    assert len(FEATURE_NAMES) == 25


def test_three_event_fixture():
    t = table_of(
        make_event(1, "flood", 2001, damage=1.0e6),
        make_event(2, "flood", 2001),
        make_event(3, "storm", 2001),
        make_event(4, "flood", 2002, damage=9.0),  # other year, ignored
    )
    row = aggregate_year(t, G, 2001).as_dict()
    assert (row["flood_count"], row["flood_binary"], row["flood_damage"]) == (2, 1, 1.0e6)
    assert (row["storm_count"], row["storm_binary"], row["storm_damage"]) == (1, 1, 0.0)
    assert row["year_feature"] == 2001
    rest = [v for k, v in row.items() if not k.startswith(("flood", "storm", "year"))]
    assert len(rest) == 18 and all(v == 0 for v in rest)


def test_empty_year():
    v = aggregate_year(table_of(), G, 1999).vector()
    assert np.all(v[:24] == 0) and v[24] == 1999


def test_single_earthquake():
    t = table_of(make_event(1, "earthquake", 1990, damage=2.5e7))
    row = aggregate_year(t, G, 1990)
    assert (row.count(DisasterType.EARTHQUAKE), row.binaries[2], row.damage(DisasterType.EARTHQUAKE)) == (1, 1, 2.5e7)
    assert sum(row.counts) == 1


def test_matrix_cardinality_and_order(tmp_path):
    t = table_of(make_event(1, "flood", 2001), make_event(2, "storm", 2002, lat=-5.5, lon=3.3))
    grids = {G, grid_of(-5.5, 3.3)}
    rows = feature_matrix(t, grids, range(2000, 2003))
    assert len(rows) == 6
    assert [(r.grid, r.year) for r in rows] == sorted((r.grid, r.year) for r in rows)
    write_csv(rows, tmp_path / "a.csv")
    write_csv(feature_matrix(t, grids, range(2000, 2003)), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert read_csv(tmp_path / "a.csv") == rows


def test_empty_grids():
    assert feature_matrix(table_of(make_event(1, "flood", 2001)), set(), range(2000, 2003)) == []


events = st.lists(
    st.tuples(
        st.sampled_from([t.value for t in TYPES]),
        st.integers(2000, 2005),
        st.sampled_from([(10.5, 20.5), (-3.2, 7.7), (50.1, -120.4)]),
        st.one_of(st.none(), st.floats(0, 1e9)),
    ),
    max_size=40,
)


@settings(max_examples=60, deadline=None)
@given(events)
def test_conservation_binary_and_locality(raw):
    evs = [make_event(i, d, y, lat, lon, damage=c) for i, (d, y, (lat, lon), c) in enumerate(raw)]
    t = table_of(*evs)
    grids = [grid_of(10.5, 20.5), grid_of(-3.2, 7.7)]
    rows = feature_matrix(t, grids, range(2000, 2004))
    X = to_array(rows)
    for k, dtype in enumerate(TYPES):
        expected = sum(1 for e in evs if e.disaster_type is dtype and e.grid in grids and 2000 <= e.year < 2004)
        assert X[:, 3 * k].sum() == expected
        assert np.array_equal(X[:, 3 * k + 1], np.minimum(X[:, 3 * k], 1))
        assert np.all(X[X[:, 3 * k] == 0, 3 * k + 2] == 0)
    # locality: dropping events elsewhere does not change a row
    g, y = grids[0], 2001
    local = table_of(*[e for e in evs if e.grid == g and e.year == y])
    assert aggregate_year(local, g, y) == aggregate_year(t, g, y)

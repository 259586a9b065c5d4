"""Synthetic disaster world with wiki pages, for hermetic end-to-end runs.

Each grid has two hidden traits:

* ``prone``: whether its geography text describes low, river-fed terrain.
  It raises the yearly flood probability and is visible only in the text.
* ``wetness``: drives storm frequency and also raises flood probability, so
  current-year statistics carry some signal of their own.

A flood this year hints that the grid is prone or wet, which is all the
persistence baseline can use. ``persistence`` adds direct year-to-year
dependence on top.

Wiki pages come in four flavours so every text-lookup path is exercised:
a Geography section, Summary only, a page reachable only through the
``"<name>, <country>"`` synonym, and no page at all.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from floodlens.geogrid import N_CELLS, cell_of_id

PRONE_WORDS = ["river", "delta", "floodplain", "lowland", "estuary", "wetland", "monsoon", "lagoon", "marsh", "basin"]
DRY_WORDS = ["mountain", "plateau", "arid", "highland", "desert", "rugged", "steep", "hills", "peak", "range"]
FILLER = ["the", "region", "area", "lies", "near", "along", "part", "large", "small", "central", "district"]
COUNTRIES = ["Avaria", "Belmora", "Cordovia", "Dunmark", "Estavia", "Fenwick"]
OTHER_TYPES = ["earthquake", "extreme temperature", "landslide", "volcanic activity", "drought", "mass movement (dry)"]
SYLLABLES = ["ka", "lo", "mi", "ra", "te", "vu", "no", "si", "da", "pe", "zu", "fa", "go", "hi", "be", "tu"]


@dataclass
class SyntheticWorld:
    window: tuple[int, int]
    disasters: list[dict]
    damage: list[dict]
    pages: dict[str, str]
    grids: dict[int, dict] = field(default_factory=dict)

    def write(self, directory: str | Path) -> dict[str, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"disasters": d / "disasters.csv", "damage": d / "damage.csv", "pages": d / "pages.json"}
        with open(paths["disasters"], "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, ["record_id", "disaster_type", "year", "lat", "lon", "location_name", "country"], lineterminator="\n")
            w.writeheader()
            w.writerows(self.disasters)
        with open(paths["damage"], "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, ["record_id", "damage_cost"], lineterminator="\n")
            w.writeheader()
            w.writerows(self.damage)
        paths["pages"].write_text(json.dumps(self.pages, indent=1, sort_keys=True), encoding="utf-8")
        return paths


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _sentence(rng, words: list[str], n: int) -> str:
    picks = list(rng.choice(words, size=n, replace=True)) + list(rng.choice(FILLER, size=n, replace=True))
    rng.shuffle(picks)
    return " ".join(picks).capitalize() + "."


def _geography(rng, prone: bool) -> str:
    words = PRONE_WORDS if prone else DRY_WORDS
    return " ".join(_sentence(rng, words, 3) for _ in range(3))


def make_world(
    n_grids: int = 50,
    years: tuple[int, int] = (1999, 2018),
    seed: int = 0,
    prone_effect: float = 1.8,
    wetness_effect: float = 3.0,
    persistence: float = 0.0,
    base_logit: float = -3.2,
    storm_rate: float = 4.0,
    page_mix: tuple[float, float, float, float] = (0.7, 0.15, 0.1, 0.05),
) -> SyntheticWorld:
    """Generate a world; every grid is guaranteed at least two floods."""
    rng = np.random.default_rng(seed)
    start, end = years
    cells = rng.choice(N_CELLS, size=n_grids, replace=False)
    names: set[str] = set()
    disasters: list[dict] = []
    damage: list[dict] = []
    pages: dict[str, str] = {}
    grids: dict[int, dict] = {}
    counter = 0
    kinds = ["geography", "summary", "synonym", "missing"]
    kind_draws = rng.choice(len(kinds), size=n_grids, p=np.asarray(page_mix) / sum(page_mix))

    def add(dtype: str, year: int, gid: int, name: str, country: str, cost: float | None) -> None:
        nonlocal counter
        counter += 1
        rid = f"SYN-{year}-{counter:05d}"
        lat0, lon0 = cell_of_id(gid)
        disasters.append({
            "record_id": rid, "disaster_type": dtype, "year": year,
            "lat": round(lat0 + rng.uniform(0.01, 0.99), 4),
            "lon": round(lon0 + rng.uniform(0.01, 0.99), 4),
            "location_name": name, "country": country,
        })
        if cost is not None:
            damage.append({"record_id": rid, "damage_cost": round(cost, 2)})

    for k, gid in enumerate(sorted(int(c) for c in cells)):
        while True:
            name = "".join(rng.choice(SYLLABLES, size=3)).capitalize()
            if name not in names:
                names.add(name)
                break
        country = str(rng.choice(COUNTRIES))
        prone = bool(rng.random() < 0.5)
        wetness = float(rng.random())
        kind = kinds[kind_draws[k]]
        geo = _geography(rng, prone)
        lead = f"{name} is a town in {country}. " + _sentence(rng, FILLER, 2)
        if kind == "geography":
            pages[name] = f"{lead}\n\n== History ==\n{_sentence(rng, FILLER, 3)}\n\n== Geography ==\n{geo}\n\n=== Climate ===\n{_sentence(rng, FILLER, 2)}\n"
        elif kind == "summary":
            pages[name] = f"{lead} {geo}\n\n== Economy ==\n{_sentence(rng, FILLER, 3)}\n"
        elif kind == "synonym":
            pages[f"{name}, {country}"] = f"{lead}\n\n== Geography ==\n{geo}\n"

        flooded_last = False
        n_floods = 0
        flood_years = []
        for year in range(start, end + 1):
            logit = base_logit + prone_effect * prone + wetness_effect * wetness + persistence * flooded_last
            flood = rng.random() < _sigmoid(logit)
            if flood:
                n = 1 + int(rng.random() < 0.25)
                for _ in range(n):
                    add("flood", year, gid, name, country, rng.lognormal(14, 1.5) if rng.random() < 0.6 else None)
                n_floods += n
                flood_years.append(year)
            flooded_last = flood
            for _ in range(rng.poisson(0.1 + storm_rate * wetness)):
                add("storm", year, gid, name, country, rng.lognormal(13, 1.5) if rng.random() < 0.5 else None)
            if rng.random() < 0.08:
                add(str(rng.choice(OTHER_TYPES)), year, gid, name, country, None)
        # every grid needs at least two floods to pass the grid filter
        while n_floods < 2:
            year = int(rng.integers(start, end + 1))
            add("flood", year, gid, name, country, None)
            n_floods += 1
            flood_years.append(year)
        grids[gid] = {"name": name, "country": country, "prone": prone, "wetness": wetness,
                      "page": kind, "n_floods": n_floods}

    order = sorted(range(len(disasters)), key=lambda i: (disasters[i]["year"], disasters[i]["record_id"]))
    disasters = [disasters[i] for i in order]
    return SyntheticWorld((start, end), disasters, damage, pages, grids)


def write_demo(directory: str | Path, n_grids: int = 50, years: tuple[int, int] = (1999, 2018), seed: int = 0) -> Path:
    """Write a synthetic world plus a ready-to-run ``run.yaml`` (tiny encoder, mock wiki)."""
    import yaml

    d = Path(directory)
    world = make_world(n_grids, years, seed)
    paths = world.write(d)
    cfg = {
        "paths": {"disasters": paths["disasters"].name, "damage": paths["damage"].name, "output_dir": "run"},
        "window": list(world.window),
        "encoder": {"name": "tiny"},
        "wiki": {"mock_pages": paths["pages"].name, "rate_limit": None},
    }
    path = d / "run.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path


if __name__ == "__main__":
    import sys

    print(write_demo(sys.argv[1] if len(sys.argv) > 1 else "synthetic-demo"))

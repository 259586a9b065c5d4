"""Next-N-year flood examples: features, labels, split and feature selection.

One example per (grid, year) for grids with at least two recorded floods.
Features are the 24 current-year statistics, the year, and (in multimodal
mode) the grid's text embedding, in that order. The label is 1 when the grid
floods at least once in years ``year+1 .. year+N``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from floodlens.featstat import FEATURE_NAMES, FLOOD_BINARY_COLUMN, GridYearFeatures, aggregate_year
from floodlens.ingest import DEFAULT_WINDOW, DisasterType, EventTable

logger = logging.getLogger(__name__)

MIN_FLOODS = 2


class HorizonError(ValueError):
    """Label window runs past the end of the study period."""


class JoinError(ValueError):
    """A filtered grid has no embedding."""


class DegenerateDatasetError(ValueError):
    """No usable (non-constant) feature in the training set."""


def _flood_years(table: EventTable) -> dict[int, set[int]]:
    return {g: set(ys) for g, ys in table.flood_years().items()}


def flood_label(
    table: EventTable, grid: int, year: int, n: int, window: tuple[int, int] = DEFAULT_WINDOW
) -> int:
    if year + n > window[1]:
        raise HorizonError(f"{year}+{n} runs past study end {window[1]}")
    years = {ev.year for ev in table.for_grid(grid) if ev.disaster_type is DisasterType.FLOOD}
    return int(any(year < y <= year + n for y in years))


def filter_grids(table: EventTable, min_floods: int = MIN_FLOODS) -> set[int]:
    """Grids with at least ``min_floods`` flood events over the whole record."""
    return {g for g, ys in table.flood_years().items() if len(ys) >= min_floods}


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    grids: np.ndarray
    years: np.ndarray
    horizon: int
    feature_names: list[str]
    architecture: str = "statistical"

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            self.X[idx], self.y[idx], self.grids[idx], self.years[idx], self.horizon,
            list(self.feature_names), self.architecture,
        )

    @property
    def current_flood(self) -> np.ndarray:
        return self.X[:, FLOOD_BINARY_COLUMN].astype(int)


@dataclass
class DatasetSplit:
    data: Dataset
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    selected_feature_indices: list[int]
    mode: str = "random"
    meta: dict = field(default_factory=dict)

    @property
    def train(self) -> Dataset:
        return self.data.subset(self.train_idx)

    @property
    def test(self) -> Dataset:
        return self.data.subset(self.test_idx)

    @property
    def selected_names(self) -> list[str]:
        return [self.data.feature_names[i] for i in self.selected_feature_indices]

    def manifest(self) -> dict:
        return {
            "horizon": self.data.horizon,
            "architecture": self.data.architecture,
            "feature_names": self.data.feature_names,
            "n_examples": len(self.data),
            "n_train": int(len(self.train_idx)),
            "n_test": int(len(self.test_idx)),
            "seed": self.seed,
            "split_mode": self.mode,
            "selected_feature_indices": list(self.selected_feature_indices),
            **self.meta,
        }

    def save(self, path: str | Path) -> None:
        """CSV of all examples (with split column) plus a JSON manifest."""
        path = Path(path)
        split = np.empty(len(self.data), dtype=object)
        split[self.train_idx] = "train"
        split[self.test_idx] = "test"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["grid", "year", "label", "split", *self.data.feature_names])
            for i in range(len(self.data)):
                w.writerow(
                    [int(self.data.grids[i]), int(self.data.years[i]), int(self.data.y[i]), split[i]]
                    + [repr(float(v)) for v in self.data.X[i]]
                )
        path.with_suffix(".json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "DatasetSplit":
        path = Path(path)
        manifest = json.loads(path.with_suffix(".json").read_text())
        grids, years, ys, splits, rows = [], [], [], [], []
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            for rec in reader:
                grids.append(int(rec[0]))
                years.append(int(rec[1]))
                ys.append(int(rec[2]))
                splits.append(rec[3])
                rows.append([float(v) for v in rec[4:]])
        names = header[4:]
        X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
        data = Dataset(X, np.array(ys), np.array(grids), np.array(years), manifest["horizon"], names, manifest["architecture"])
        splits = np.array(splits)
        meta = {k: v for k, v in manifest.items() if k not in {
            "horizon", "architecture", "feature_names", "n_examples", "n_train", "n_test", "seed",
            "split_mode", "selected_feature_indices"}}
        return cls(
            data,
            np.flatnonzero(splits == "train"),
            np.flatnonzero(splits == "test"),
            manifest["seed"],
            manifest["selected_feature_indices"],
            manifest["split_mode"],
            meta,
        )


def build_examples(
    table: EventTable,
    grids: Sequence[int],
    n: int,
    window: tuple[int, int] = DEFAULT_WINDOW,
    features: Mapping[tuple[int, int], GridYearFeatures] | None = None,
    embeddings: Mapping[int, np.ndarray] | None = None,
    architecture: str = "statistical",
) -> Dataset:
    """Feature rows and labels for every (grid, year) with year + n inside the window."""
    if not 1 <= n <= 5:
        raise ValueError(f"horizon {n} outside [1, 5]")
    start, end = window
    years = range(start, end - n + 1)
    grids = sorted(set(grids))
    if embeddings is not None:
        missing = [g for g in grids if g not in embeddings]
        if missing:
            raise JoinError(f"{len(missing)} grids lack an embedding, e.g. {missing[:5]}")
        dim = len(next(iter(embeddings.values()))) if embeddings else 0
    else:
        dim = 0
    floods = _flood_years(table)
    n_rows = len(grids) * len(years)
    X = np.zeros((n_rows, len(FEATURE_NAMES) + dim))
    y = np.zeros(n_rows, dtype=int)
    gcol = np.zeros(n_rows, dtype=np.int64)
    ycol = np.zeros(n_rows, dtype=np.int64)
    i = 0
    for g in grids:
        fy = floods.get(g, set())
        emb = np.asarray(embeddings[g], dtype=np.float64) if dim else None
        for yr in years:
            row = features.get((g, yr)) if features is not None else None
            row = row or aggregate_year(table, g, yr)
            X[i, : len(FEATURE_NAMES)] = row.vector()
            if dim:
                X[i, len(FEATURE_NAMES) :] = emb
            y[i] = int(any(yr < f <= yr + n for f in fy))
            gcol[i], ycol[i] = g, yr
            i += 1
    names = list(FEATURE_NAMES) + [f"emb_{architecture}_{k}" for k in range(dim)]
    return Dataset(X, y, gcol, ycol, n, names, architecture)


def split_indices(
    data: Dataset, seed: int, mode: str = "random", train_fraction: float = 0.7
) -> tuple[np.ndarray, np.ndarray]:
    """Train/test index arrays.

    ``random`` shuffles examples; ``grouped`` keeps every grid on one side;
    ``temporal`` trains on the earliest years.
    """
    n = len(data)
    rng = np.random.default_rng(seed)
    if mode == "random":
        order = rng.permutation(n)
        n_train = int(round(train_fraction * n))
        return np.sort(order[:n_train]), np.sort(order[n_train:])
    if mode == "grouped":
        ugrids = np.unique(data.grids)
        order = ugrids[rng.permutation(len(ugrids))]
        n_train_grids = int(round(train_fraction * len(ugrids)))
        train_mask = np.isin(data.grids, order[:n_train_grids])
        return np.flatnonzero(train_mask), np.flatnonzero(~train_mask)
    if mode == "temporal":
        order = np.lexsort((data.grids, data.years))
        cut_year = data.years[order[int(round(train_fraction * n)) - 1]] if n else 0
        train_mask = data.years <= cut_year
        return np.flatnonzero(train_mask), np.flatnonzero(~train_mask)
    raise ValueError(f"unknown split mode {mode!r}")


def select_features(X_train: np.ndarray, y_train: np.ndarray, top_k: int = 64, seed: int = 0) -> list[int]:
    """Indices of non-constant training columns, capped at ``top_k`` by forest importance."""
    X_train = np.asarray(X_train, dtype=np.float64)
    if X_train.shape[0] == 0:
        raise DegenerateDatasetError("empty training set")
    varying = np.flatnonzero(np.ptp(X_train, axis=0) > 0)
    if varying.size == 0:
        raise DegenerateDatasetError("every feature is constant on the training set")
    if varying.size <= top_k or len(np.unique(y_train)) < 2:
        return varying[:top_k].tolist()
    from sklearn.ensemble import RandomForestClassifier

    forest = RandomForestClassifier(n_estimators=100, random_state=seed, n_jobs=1)
    forest.fit(X_train[:, varying], y_train)
    ranked = sorted(range(varying.size), key=lambda j: (-forest.feature_importances_[j], j))
    return sorted(int(varying[j]) for j in ranked[:top_k])


@dataclass
class DatasetConfig:
    window: tuple[int, int] = DEFAULT_WINDOW
    split_mode: str = "random"
    train_fraction: float = 0.7
    top_k: int = 64
    min_floods: int = MIN_FLOODS


def assemble(
    table: EventTable,
    features: Mapping[tuple[int, int], GridYearFeatures] | None,
    embeddings: Mapping[int, np.ndarray] | None,
    n: int,
    seed: int,
    config: DatasetConfig | None = None,
    architecture: str = "statistical",
) -> DatasetSplit:
    """Filter grids, build examples, split, and fit feature selection on train only."""
    config = config or DatasetConfig()
    grids = sorted(filter_grids(table, config.min_floods))
    data = build_examples(table, grids, n, config.window, features, embeddings, architecture)
    train_idx, test_idx = split_indices(data, seed, config.split_mode, config.train_fraction)
    selected = select_features(data.X[train_idx], data.y[train_idx], config.top_k, seed)
    logger.info(
        "horizon %d %s: %d grids, %d examples (%d train), positive rate %.3f",
        n, architecture, len(grids), len(data), len(train_idx), data.y.mean() if len(data) else 0.0,
    )
    return DatasetSplit(
        data, train_idx, test_idx, seed, selected, config.split_mode,
        meta={"n_grids": len(grids), "top_k": config.top_k, "selection": "variance+random_forest_importance"},
    )

"""Gradient-boosted tree classifier with 3-fold CV grid search, and the persistence baseline."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.model_selection import GridSearchCV, StratifiedKFold
from xgboost import XGBClassifier

from floodlens.dataset import Dataset, DatasetSplit
from floodlens.featstat import FLOOD_BINARY_COLUMN

logger = logging.getLogger(__name__)

DEFAULT_GRID = {
    "max_depth": [3, 5, 7],
    "learning_rate": [0.05, 0.1, 0.3],
    "n_estimators": [100, 300],
}


class TrainingError(ValueError):
    pass


class FeatureContractError(ValueError):
    """Inference features do not match the training manifest."""


def manifest_checksum(names: list[str]) -> str:
    return hashlib.sha256("\n".join(names).encode()).hexdigest()


@dataclass
class SearchConfig:
    grid: dict[str, list] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID.items()})
    folds: int = 3
    scoring: str = "roc_auc"
    balance_classes: bool = True
    n_jobs: int = 1


@dataclass
class TrainedClassifier:
    estimator: XGBClassifier
    best_hyperparameters: dict
    cv_auc: float
    feature_names: list[str]
    selected_feature_indices: list[int]
    seed: int
    grid: dict = field(default_factory=dict)

    @property
    def manifest_checksum(self) -> str:
        return manifest_checksum(self.feature_names)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        self.estimator.save_model(path)
        sidecar = {
            "grid": self.grid,
            "best_hyperparameters": self.best_hyperparameters,
            "cv_auc": self.cv_auc,
            "seed": self.seed,
            "feature_names": self.feature_names,
            "selected_feature_indices": self.selected_feature_indices,
            "manifest_checksum": self.manifest_checksum,
        }
        path.with_suffix(".meta.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "TrainedClassifier":
        path = Path(path)
        meta = json.loads(path.with_suffix(".meta.json").read_text())
        est = XGBClassifier()
        est.load_model(path)
        return cls(
            est, meta["best_hyperparameters"], meta["cv_auc"], meta["feature_names"],
            meta["selected_feature_indices"], meta["seed"], meta["grid"],
        )


def _estimator(seed: int, scale_pos_weight: float) -> XGBClassifier:
    return XGBClassifier(
        tree_method="hist",
        n_jobs=1,
        random_state=seed,
        scale_pos_weight=scale_pos_weight,
        eval_metric="logloss",
        verbosity=0,
    )


def fit_search(
    X: np.ndarray, y: np.ndarray, search: SearchConfig | None = None, seed: int = 0
) -> tuple[XGBClassifier, dict, float]:
    """Grid search scored by ROCAUC over stratified folds; best model refit on all of X."""
    search = search or SearchConfig()
    y = np.asarray(y).astype(int)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("training labels contain a single class")
    if min(n_pos, n_neg) < search.folds:
        raise TrainingError(f"need at least {search.folds} examples of each class for CV")
    spw = n_neg / n_pos if search.balance_classes else 1.0
    cv = StratifiedKFold(n_splits=search.folds, shuffle=True, random_state=seed)
    gs = GridSearchCV(
        _estimator(seed, spw), search.grid, scoring=search.scoring, cv=cv, refit=True, n_jobs=search.n_jobs
    )
    gs.fit(X, y)
    best = {k: (v.item() if hasattr(v, "item") else v) for k, v in gs.best_params_.items()}
    return gs.best_estimator_, best, float(gs.best_score_)


def train(split: DatasetSplit, search: SearchConfig | None = None, seed: int = 0) -> TrainedClassifier:
    search = search or SearchConfig()
    train_set = split.train
    if len(train_set) == 0:
        raise TrainingError("empty training set")
    cols = list(split.selected_feature_indices)
    est, best, cv_auc = fit_search(train_set.X[:, cols], train_set.y, search, seed)
    n_points = int(np.prod([len(v) for v in search.grid.values()]))
    logger.info("horizon %d %s: best %s cv_auc %.4f (%d grid points)",
                split.data.horizon, split.data.architecture, best, cv_auc, n_points)
    return TrainedClassifier(est, best, cv_auc, list(split.data.feature_names), cols, seed, search.grid)


def predict_proba(model: TrainedClassifier, examples: Dataset) -> np.ndarray:
    """Positive-class probability per example, in input order."""
    if list(examples.feature_names) != list(model.feature_names):
        raise FeatureContractError(
            f"feature manifest {manifest_checksum(list(examples.feature_names))[:12]} "
            f"!= training manifest {model.manifest_checksum[:12]}"
        )
    if len(examples) == 0:
        return np.empty(0)
    X = examples.X[:, model.selected_feature_indices]
    return model.estimator.predict_proba(X)[:, 1].astype(np.float64)


def baseline_predict(examples: Dataset | np.ndarray) -> np.ndarray:
    """Persistence forecast: the next N years look like the current year."""
    X = examples.X if isinstance(examples, Dataset) else np.asarray(examples)
    if X.shape[0] == 0:
        return np.empty(0, dtype=int)
    return (X[:, FLOOD_BINARY_COLUMN] > 0).astype(int)


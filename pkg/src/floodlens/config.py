"""Run configuration: a YAML file of documented keys, overridable per key.

Keys (defaults in ``DEFAULTS``)::

    paths.disasters       disaster CSV (record_id,disaster_type,year,lat,lon,location_name)
    paths.damage          damage CSV (record_id,damage_cost), optional
    paths.output_dir      where stage artifacts and manifest.json go
    paths.cache_dir       text cache; env FLOODLENS_CACHE_DIR, else <output_dir>/cache
    window                [first_year, last_year] of the study period
    horizons              label horizons N, subset of 1..5
    architectures         text embedding architectures to build and evaluate
    encoder.name          "distilbert-base-uncased", a local path, or "tiny"
    encoder.checksum      pinned backbone sha256 (optional)
    encoder.max_length    token limit (default: encoder's own, capped at 512)
    seeds.split / seeds.model / seeds.text
    wiki.base_url         env FLOODLENS_WIKI_BASE, else the public endpoint
    wiki.rate_limit       requests per second
    wiki.retries / wiki.backoff / wiki.timeout
    wiki.mock_pages       JSON {title: extract}; serve it locally instead of the network
    split.mode            random | grouped | temporal
    split.train_fraction
    selection.top_k / selection.min_floods
    search.grid / search.folds
    finetune.epochs / finetune.learning_rate / finetune.batch_size
    head.epochs / head.learning_rate / head.batch_size / head.sigmoid_placement
    report.figures        write roc_<model>_<horizon>.png files
    report.threshold      score threshold for accuracy, F1, balanced accuracy
"""

from __future__ import annotations

import copy
import os
from pathlib import Path
from typing import Any

import yaml

from floodlens.model import DEFAULT_GRID

ARCHITECTURES = ("pretrained_avg", "finetuned_avg", "transfer_head")

DEFAULTS: dict[str, Any] = {
    "paths": {"disasters": None, "damage": None, "output_dir": "floodlens-run", "cache_dir": None},
    "window": [1960, 2018],
    "horizons": [1, 2, 5],
    "architectures": list(ARCHITECTURES),
    "encoder": {"name": "distilbert-base-uncased", "checksum": None, "max_length": None},
    "seeds": {"split": 0, "model": 0, "text": 0},
    "wiki": {"base_url": None, "rate_limit": 2.0, "retries": 3, "backoff": 0.5, "timeout": 10.0, "mock_pages": None},
    "split": {"mode": "random", "train_fraction": 0.7},
    "selection": {"top_k": 64, "min_floods": 2},
    "search": {"grid": copy.deepcopy(DEFAULT_GRID), "folds": 3},
    "finetune": {"epochs": 3, "learning_rate": 2e-5, "batch_size": 16},
    "head": {"epochs": 3, "learning_rate": 1e-3, "batch_size": 16, "sigmoid_placement": "per_token"},
    "report": {"figures": False, "threshold": 0.5},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, update: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key {prefix + key!r}")
        if isinstance(base[key], dict) and key != "grid":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {prefix + key!r} must be a mapping")
            out[key] = _merge(base[key], value, prefix + key + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_key(cfg: dict, dotted: str, value: Any) -> None:
    """Set ``a.b.c`` in place; the key must already exist."""
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[parts[-1]] = value


def parse_override(item: str) -> tuple[str, Any]:
    """``key=value`` with the value parsed as YAML (numbers, lists, null...)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in {item!r}: {exc}") from exc


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        cfg = _merge(cfg, raw)
        base = Path(path).parent
        for key in ("disasters", "damage", "output_dir", "cache_dir"):
            value = cfg["paths"][key]
            if value is not None and not Path(value).is_absolute():
                cfg["paths"][key] = str(base / value)
        mock = cfg["wiki"]["mock_pages"]
        if mock is not None and not Path(mock).is_absolute():
            cfg["wiki"]["mock_pages"] = str(base / mock)
    for key, value in (overrides or {}).items():
        set_key(cfg, key, value)
    if not cfg["paths"]["cache_dir"] and os.environ.get("FLOODLENS_CACHE_DIR"):
        cfg["paths"]["cache_dir"] = os.environ["FLOODLENS_CACHE_DIR"]
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    horizons = cfg["horizons"]
    if not horizons or not all(isinstance(h, int) and 1 <= h <= 5 for h in horizons):
        raise ConfigError(f"horizons must be a non-empty subset of 1..5, got {horizons!r}")
    window = cfg["window"]
    if len(window) != 2 or window[0] > window[1]:
        raise ConfigError(f"window must be [first_year, last_year], got {window!r}")
    if window[1] - max(horizons) < window[0]:
        raise ConfigError("window too short for the largest horizon")
    bad = [a for a in cfg["architectures"] if a not in ARCHITECTURES]
    if bad:
        raise ConfigError(f"unknown architectures {bad}; choose from {ARCHITECTURES}")
    if cfg["split"]["mode"] not in ("random", "grouped", "temporal"):
        raise ConfigError(f"split.mode must be random, grouped or temporal, got {cfg['split']['mode']!r}")
    if not 0 < cfg["split"]["train_fraction"] < 1:
        raise ConfigError("split.train_fraction must be in (0, 1)")
    for stage in ("seeds",):
        for k, v in cfg[stage].items():
            if not isinstance(v, int):
                raise ConfigError(f"seeds.{k} must be an integer")

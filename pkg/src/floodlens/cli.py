"""``floodlens`` command line.

Usage::

    floodlens [--config run.yaml] [flags] {ingest,fetch-text,embed,build-dataset,train,evaluate,report,all}

Exit codes: 0 success, 1 user or configuration error, 2 environment error
(encoder weights unavailable, network failure, output directory locked).
"""

from __future__ import annotations

import argparse
import logging
import sys

from floodlens.config import ConfigError, load_config, parse_override
from floodlens.dataset import DegenerateDatasetError, HorizonError, JoinError
from floodlens.evalmetrics import ReportError, UndefinedMetricError
from floodlens.ingest import SchemaError
from floodlens.model import FeatureContractError, TrainingError
from floodlens.pipeline import STAGES, LockError, Pipeline, StageDependencyError, output_lock
from floodlens.textcorpus import ProtocolError, TransientFetchError
from floodlens.textembed import EncoderUnavailable

logger = logging.getLogger("floodlens")

USER_ERRORS = (
    ConfigError, StageDependencyError, SchemaError, FileNotFoundError, HorizonError, JoinError,
    DegenerateDatasetError, TrainingError, FeatureContractError, ReportError, UndefinedMetricError,
)
ENV_ERRORS = (EncoderUnavailable, TransientFetchError, ProtocolError, LockError, OSError)

# flag -> config key
FLAG_KEYS = {
    "disasters": "paths.disasters",
    "damage": "paths.damage",
    "output_dir": "paths.output_dir",
    "cache_dir": "paths.cache_dir",
    "horizons": "horizons",
    "architectures": "architectures",
    "encoder": "encoder.name",
    "wiki_base": "wiki.base_url",
    "mock_pages": "wiki.mock_pages",
    "rate_limit": "wiki.rate_limit",
    "split_mode": "split.mode",
    "top_k": "selection.top_k",
    "figures": "report.figures",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floodlens", description="Multi-year flood risk pipeline.")
    p.add_argument("stage", choices=[*STAGES, "all"])
    p.add_argument("-c", "--config", help="YAML config file")
    p.add_argument("--disasters", help="disaster CSV")
    p.add_argument("--damage", help="damage CSV")
    p.add_argument("-o", "--output-dir")
    p.add_argument("--cache-dir")
    p.add_argument("--horizons", type=int, nargs="+")
    p.add_argument("--architectures", nargs="+")
    p.add_argument("--encoder", help="encoder name or path, or 'tiny'")
    p.add_argument("--wiki-base", help="MediaWiki api.php URL")
    p.add_argument("--mock-pages", help="serve pages from this JSON file instead of the network")
    p.add_argument("--rate-limit", type=float)
    p.add_argument("--split-mode", choices=["random", "grouped", "temporal"])
    p.add_argument("--top-k", type=int)
    p.add_argument("--seed", type=int, help="sets seeds.split, seeds.model and seeds.text")
    p.add_argument("--figures", action="store_true", default=None, help="write ROC curve images")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        overrides = dict(parse_override(item) for item in args.set)
        for flag, key in FLAG_KEYS.items():
            value = getattr(args, flag)
            if value is not None:
                overrides[key] = value
        if args.seed is not None:
            for k in ("split", "model", "text"):
                overrides[f"seeds.{k}"] = args.seed
        cfg = load_config(args.config, overrides)
        pipeline = Pipeline(cfg)
        with output_lock(pipeline.out):
            pipeline.run(args.stage)
        if args.stage in ("report", "all"):
            print((pipeline.stage_dir("report") / "report.txt").read_text(encoding="utf-8"))
    except USER_ERRORS as exc:
        print(f"floodlens: error: {exc}", file=sys.stderr)
        return 1
    except ENV_ERRORS as exc:
        print(f"floodlens: environment error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Pipeline stages over one output directory.

Each stage reads the artifacts of earlier stages, writes its own directory
atomically (build in ``<stage>.tmp``, then rename) and records sha256
checksums of its files in ``manifest.json``::

    ingest/         events.jsonl, rejects.jsonl, features.csv, summary.json
    text/           corpus.jsonl, summary.json
    embed/          <architecture>.npz, finetuned.pt(+.json), head.npz(+.json)
    dataset/        h<N>_<model>.csv + .json
    models/         h<N>_<model>.json + .meta.json
    eval/           predictions_h<N>.csv, runs.json
    report/         report.csv, report.txt, roc_<model>_<N>.png
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import shutil
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from floodlens import featstat, textembed
from floodlens.config import ConfigError
from floodlens.dataset import DatasetConfig, DatasetSplit, assemble, filter_grids
from floodlens.evalmetrics import Run, build_report, plot_roc
from floodlens.ingest import EventTable, parse_events, unique_grids
from floodlens.model import SearchConfig, TrainedClassifier, baseline_predict, predict_proba, train
from floodlens.textcorpus import CorpusCache, TextSource, TransientFetchError, WikiClient, build_corpus

logger = logging.getLogger(__name__)

STAGES = ("ingest", "fetch-text", "embed", "build-dataset", "train", "evaluate", "report")
STAGE_DIRS = {
    "ingest": "ingest",
    "fetch-text": "text",
    "embed": "embed",
    "build-dataset": "dataset",
    "train": "models",
    "evaluate": "eval",
    "report": "report",
}


class StageDependencyError(RuntimeError):
    """An upstream artifact is missing."""


class LockError(RuntimeError):
    """Another pipeline instance holds the output directory."""


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".floodlens.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        pid = lock.read_text().strip()
        if pid.isdigit() and not _alive(int(pid)):
            lock.unlink()
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        else:
            raise LockError(f"{out} is locked by process {pid or '?'} ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


class Pipeline:
    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.out = Path(cfg["paths"]["output_dir"])
        self.window = tuple(cfg["window"])
        self.models = ["statistical", *cfg["architectures"]]

    # ------------------------------------------------------------ plumbing

    def stage_dir(self, stage: str) -> Path:
        return self.out / STAGE_DIRS[stage]

    def _require(self, stage: str, *names: str) -> list[Path]:
        paths = [self.stage_dir(stage) / n for n in names]
        missing = [p for p in paths if not p.exists()]
        if missing:
            raise StageDependencyError(
                f"missing {missing[0]} (from stage '{stage}'); run `floodlens {stage}` first"
            )
        return paths

    @contextmanager
    def _writing(self, stage: str):
        final = self.stage_dir(stage)
        tmp = final.with_name(final.name + ".tmp")
        shutil.rmtree(tmp, ignore_errors=True)
        tmp.mkdir(parents=True)
        yield tmp
        old = final.with_name(final.name + ".old")
        shutil.rmtree(old, ignore_errors=True)
        if final.exists():
            final.rename(old)
        tmp.rename(final)
        shutil.rmtree(old, ignore_errors=True)
        self._record(stage, final)

    def _record(self, stage: str, directory: Path) -> None:
        path = self.out / "manifest.json"
        manifest = json.loads(path.read_text()) if path.exists() else {"stages": {}}
        manifest["config"] = self.cfg
        manifest["stages"][stage] = {
            "files": {
                str(p.relative_to(self.out)): sha256_file(p)
                for p in sorted(directory.rglob("*"))
                if p.is_file()
            }
        }
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        os.replace(tmp, path)

    def run(self, stage: str) -> None:
        if stage == "all":
            for s in STAGES:
                self.run(s)
            return
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        logger.info("stage %s", stage)
        getattr(self, "stage_" + stage.replace("-", "_"))()

    def _table(self) -> EventTable:
        (events,) = self._require("ingest", "events.jsonl")
        return EventTable.from_jsonl(events)

    # -------------------------------------------------------------- stages

    def stage_ingest(self) -> None:
        paths = self.cfg["paths"]
        if not paths["disasters"]:
            raise ConfigError("paths.disasters is not set")
        table = parse_events(paths["disasters"], paths["damage"], window=self.window)
        grids = unique_grids(table)
        rows = featstat.feature_matrix(table, grids, range(self.window[0], self.window[1] + 1))
        with self._writing("ingest") as d:
            table.to_jsonl(d / "events.jsonl")
            table.write_rejects(d / "rejects.jsonl")
            featstat.write_csv(rows, d / "features.csv")
            summary = {
                "n_input_rows": table.n_input_rows,
                "n_events": len(table),
                "n_rejects": len(table.rejects),
                "n_grids": len(grids),
                "n_filtered_grids": len(filter_grids(table, self.cfg["selection"]["min_floods"])),
            }
            (d / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        logger.info("ingest: %s", summary)

    def _cache_path(self) -> Path:
        cache_dir = Path(self.cfg["paths"]["cache_dir"] or self.out / "cache")
        cache_dir.mkdir(parents=True, exist_ok=True)
        return cache_dir / "corpus.jsonl"

    def stage_fetch_text(self) -> None:
        table = self._table()
        grids = sorted(unique_grids(table))
        wiki = self.cfg["wiki"]
        cache = CorpusCache.load(self._cache_path())
        server = None
        base_url = wiki["base_url"]
        if wiki["mock_pages"]:
            from floodlens.mockwiki import MockWikiServer

            pages = json.loads(Path(wiki["mock_pages"]).read_text(encoding="utf-8"))
            server = MockWikiServer(pages).start()
            base_url = server.url
        try:
            client = WikiClient(base_url, wiki["rate_limit"], wiki["retries"], wiki["backoff"], wiki["timeout"])
            cache = build_corpus(table, grids, client, cache)
        finally:
            if server is not None:
                server.stop()
        cache.save()
        last = cache.manifest[-1]
        if last["failed"] and not last["fetches"]:
            # nothing got through: treat as an outage rather than a corpus of blanks
            raise TransientFetchError(f"all {len(last['failed'])} text lookups failed; is the wiki endpoint reachable?")
        with self._writing("fetch-text") as d:
            with open(d / "corpus.jsonl", "w", encoding="utf-8", newline="\n") as fh:
                for g in grids:
                    fh.write(json.dumps(cache.entries[g].to_dict(), sort_keys=True) + "\n")
            by_source = {s.value: sum(cache.entries[g].source is s for g in grids) for s in TextSource}
            summary = {"n_grids": len(grids), "by_source": by_source, "last_run": cache.manifest[-1]}
            (d / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        logger.info("fetch-text: %s", by_source)

    def _corpus(self) -> CorpusCache:
        (path,) = self._require("fetch-text", "corpus.jsonl")
        cache = CorpusCache.load(path)
        cache.path = None
        return cache

    def stage_embed(self) -> None:
        table = self._table()
        corpus = self._corpus()
        enc_cfg = self.cfg["encoder"]
        seed = self.cfg["seeds"]["text"]
        encoder = textembed.load_encoder(enc_cfg["name"], seed, enc_cfg["max_length"], enc_cfg["checksum"])
        labels = textembed.label_floodiness(table, corpus.entries)
        header = {"encoder": encoder.name, "backbone_checksum": encoder.checksum(), "seed": seed}
        with self._writing("embed") as d:
            for arch in self.cfg["architectures"]:
                if arch == "pretrained_avg":
                    grids, values = textembed.embed_corpus(corpus, arch, encoder)
                elif arch == "finetuned_avg":
                    ft = self.cfg["finetune"]
                    tc = textembed.TrainConfig(ft["epochs"], ft["learning_rate"], ft["batch_size"], seed)
                    tuned, log = textembed.finetune_classifier(encoder, corpus, labels, tc)
                    textembed.save_finetuned(
                        tuned, d / "finetuned.pt",
                        {"architecture": arch, "epochs": tc.epochs, "seed": seed, "metrics": log, **header},
                    )
                    grids, values = textembed.embed_corpus(corpus, arch, tuned)
                else:
                    hc = self.cfg["head"]
                    tc = textembed.TrainConfig(
                        hc["epochs"], hc["learning_rate"], hc["batch_size"], seed,
                        sigmoid_placement=hc["sigmoid_placement"],
                    )
                    head = textembed.train_transfer_head(encoder, corpus, labels, tc)
                    log = head.train_log
                    head.save(
                        d / "head.npz",
                        {"architecture": arch, "epochs": tc.epochs, "seed": seed,
                         "metrics": {"epoch_loss": log.epoch_loss, "val_accuracy": log.val_accuracy}, **header},
                    )
                    grids, values = textembed.embed_corpus(corpus, arch, encoder, head)
                textembed.save_embeddings(d / f"{arch}.npz", grids, values, {"architecture": arch, **header})
                logger.info("embed %s: %s", arch, values.shape)

    def stage_build_dataset(self) -> None:
        table = self._table()
        (feat_path,) = self._require("ingest", "features.csv")
        features = {(r.grid, r.year): r for r in featstat.read_csv(feat_path)}
        embeddings = {}
        for arch in self.cfg["architectures"]:
            (path,) = self._require("embed", f"{arch}.npz")
            embeddings[arch], _ = textembed.load_embeddings(path)
        dcfg = DatasetConfig(
            window=self.window,
            split_mode=self.cfg["split"]["mode"],
            train_fraction=self.cfg["split"]["train_fraction"],
            top_k=self.cfg["selection"]["top_k"],
            min_floods=self.cfg["selection"]["min_floods"],
        )
        seed = self.cfg["seeds"]["split"]
        with self._writing("build-dataset") as d:
            for n in self.cfg["horizons"]:
                for name in self.models:
                    split = assemble(table, features, embeddings.get(name), n, seed, dcfg, architecture=name)
                    split.save(d / f"h{n}_{name}.csv")

    def stage_train(self) -> None:
        search = SearchConfig(grid=self.cfg["search"]["grid"], folds=self.cfg["search"]["folds"])
        seed = self.cfg["seeds"]["model"]
        jobs = [(n, name) for n in self.cfg["horizons"] for name in self.models]
        splits = {job: self._require("build-dataset", f"h{job[0]}_{job[1]}.csv")[0] for job in jobs}
        with self._writing("train") as d:
            for (n, name), path in splits.items():
                model = train(DatasetSplit.load(path), search, seed)
                model.save(d / f"h{n}_{name}.json")

    def stage_evaluate(self) -> None:
        runs = []
        with self._writing("evaluate") as d:
            for n in self.cfg["horizons"]:
                ref = DatasetSplit.load(self._require("build-dataset", f"h{n}_statistical.csv")[0]).test
                cols = {"baseline": baseline_predict(ref).astype(float)}
                runs.append({"model": "baseline", "horizon": n, "feature_count": 1})
                for name in self.models:
                    test = DatasetSplit.load(self._require("build-dataset", f"h{n}_{name}.csv")[0]).test
                    if not (np.array_equal(test.grids, ref.grids) and np.array_equal(test.years, ref.years)):
                        raise StageDependencyError(f"test examples of h{n}_{name} differ from statistical")
                    model = TrainedClassifier.load(self._require("train", f"h{n}_{name}.json")[0])
                    cols[name] = predict_proba(model, test)
                    runs.append({"model": name, "horizon": n, "feature_count": len(test.feature_names)})
                with open(d / f"predictions_h{n}.csv", "w", encoding="utf-8", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["grid", "year", "label", *cols])
                    for i in range(len(ref)):
                        w.writerow([int(ref.grids[i]), int(ref.years[i]), int(ref.y[i]),
                                    *(repr(float(c[i])) for c in cols.values())])
            (d / "runs.json").write_text(json.dumps(runs, indent=2, sort_keys=True))

    def stage_report(self) -> None:
        (runs_path,) = self._require("evaluate", "runs.json")
        meta = json.loads(runs_path.read_text())
        preds = {}
        for n in sorted({r["horizon"] for r in meta}):
            (path,) = self._require("evaluate", f"predictions_h{n}.csv")
            with open(path, encoding="utf-8", newline="") as fh:
                preds[n] = list(csv.DictReader(fh))
        runs = []
        for r in meta:
            rows = preds[r["horizon"]]
            runs.append(Run(
                r["model"], r["horizon"],
                np.array([float(x[r["model"]]) for x in rows]),
                np.array([int(x["label"]) for x in rows]),
                r["feature_count"],
                tuple((x["grid"], x["year"]) for x in rows),
            ))
        report = build_report(runs, threshold=self.cfg["report"]["threshold"])
        with self._writing("report") as d:
            report.to_csv(d / "report.csv")
            (d / "report.txt").write_text(report.to_text(), encoding="utf-8")
            if self.cfg["report"]["figures"]:
                for run in runs:
                    plot_roc(run.scores, run.labels, d / f"roc_{run.model}_{run.horizon}.png",
                             f"{run.model}, next {run.horizon} year(s)")

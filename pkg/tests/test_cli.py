import csv
import json
import os

import pytest

from floodlens.cli import main
from floodlens.config import ConfigError, load_config
from floodlens.synthetic import write_demo

FAST = [
    "--set", "search.grid={max_depth: [2], learning_rate: [0.3], n_estimators: [20]}",
    "--set", "finetune.epochs=1",
    "--set", "head.epochs=2",
    "--horizons", "1", "2",
]


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    return write_demo(tmp_path_factory.mktemp("demo"), n_grids=16, years=(2005, 2018), seed=3)


def run(config, stage, *args):
    return main([stage, "-c", str(config), *FAST, *args])


def test_help_lists_stages(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for stage in ("ingest", "fetch-text", "embed", "build-dataset", "train", "evaluate", "report", "all"):
        assert stage in out


def test_stage_without_inputs_is_user_error(demo, tmp_path, capsys):
    assert run(demo, "train", "-o", str(tmp_path / "empty")) == 1
    assert "build-dataset" in capsys.readouterr().err


def test_config_errors(demo, tmp_path):
    assert run(demo, "ingest", "--set", "no.such.key=1") == 1
    assert run(demo, "ingest", "--horizons", "9") == 1
    assert main(["ingest", "-c", str(tmp_path / "missing.yaml")]) == 1
    assert main(["ingest", "-o", str(tmp_path / "x")]) == 1  # no disasters path
    bad = tmp_path / "bad.yaml"
    bad.write_text("window: [2018, 2000]\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_config_paths_relative_to_file(demo):
    cfg = load_config(demo)
    assert cfg["paths"]["disasters"] == str(demo.parent / "disasters.csv")
    assert cfg["wiki"]["mock_pages"] == str(demo.parent / "pages.json")


def test_cache_dir_env(demo, monkeypatch, tmp_path):
    monkeypatch.setenv("FLOODLENS_CACHE_DIR", str(tmp_path / "cache"))
    assert load_config(demo)["paths"]["cache_dir"] == str(tmp_path / "cache")


def test_schema_error(tmp_path):
    (tmp_path / "d.csv").write_text("id,what\n1,flood\n")
    assert main(["ingest", "--disasters", str(tmp_path / "d.csv"), "-o", str(tmp_path / "o")]) == 1


def test_unreachable_wiki_is_environment_error(demo, tmp_path):
    out = tmp_path / "o"
    assert run(demo, "ingest", "-o", str(out)) == 0
    code = run(demo, "fetch-text", "-o", str(out), "--set", "wiki.mock_pages=null",
               "--wiki-base", "http://127.0.0.1:9/w/api.php", "--set", "wiki.retries=0",
               "--set", "wiki.timeout=0.5", "--rate-limit", "100")
    assert code == 2
    assert not (out / "text").exists()
    assert (out / "cache" / "corpus.jsonl").read_text() == ""


def test_lock_held(demo, tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    (out / ".floodlens.lock").write_text(str(os.getpid()))
    assert run(demo, "ingest", "-o", str(out)) == 2
    (out / ".floodlens.lock").write_text("999999999")  # stale
    assert run(demo, "ingest", "-o", str(out)) == 0
    assert not (out / ".floodlens.lock").exists()


def test_full_run_stagewise(demo, tmp_path, capsys):
    out = tmp_path / "run"
    for stage in ("ingest", "fetch-text", "embed", "build-dataset", "train", "evaluate", "report"):
        assert run(demo, stage, "-o", str(out), "--figures") == 0, stage
    printed = capsys.readouterr().out
    assert "next 2 year(s)" in printed

    with open(out / "report" / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    models = ["baseline", "statistical", "pretrained_avg", "finetuned_avg", "transfer_head"]
    assert [(int(r["horizon"]), r["model"]) for r in rows] == [(h, m) for h in (1, 2) for m in models]
    for r in rows:
        for k in ("rocauc", "accuracy", "f1", "balanced_accuracy"):
            assert 0.0 <= float(r[k]) <= 1.0
    assert {r["feature_count"] for r in rows if r["model"] == "baseline"} == {"1"}
    assert (out / "report" / "roc_transfer_head_1.png").exists()

    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["stages"]) == {"ingest", "fetch-text", "embed", "build-dataset", "train", "evaluate", "report"}
    assert "events.jsonl" in " ".join(manifest["stages"]["ingest"]["files"])
    assert manifest["config"]["seeds"] == {"split": 0, "model": 0, "text": 0}
    assert not list(out.glob("*.tmp"))

    # the text cache is reused: no new fetches
    assert run(demo, "fetch-text", "-o", str(out)) == 0
    text_summary = json.loads((out / "text" / "summary.json").read_text())
    assert text_summary["last_run"]["fetches"] == 0 and text_summary["last_run"]["requests"] == 0

    # stage isolation: a deleted downstream artifact is rebuilt identically
    for stage, name in (("report", "report.csv"), ("evaluate", "predictions_h1.csv"), ("build-dataset", "h2_transfer_head.csv")):
        path = out / {"report": "report", "evaluate": "eval", "build-dataset": "dataset"}[stage] / name
        before = path.read_bytes()
        path.unlink()
        assert run(demo, stage, "-o", str(out)) == 0
        assert path.read_bytes() == before, stage

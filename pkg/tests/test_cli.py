import csv
import json
import shutil
import subprocess
import sys
from importlib import resources

import pytest

from seismda import cli


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.json"
    cfg.write_text(resources.files("seismda.data").joinpath("small_fleet.json").read_text())
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(root / "records")]) == 0
    for b in ("2-story", "4-story"):
        assert cli.main(["preprocess", "--in", str(root / "records" / b), "--l", "96",
                         "--domain", b, "--out", str(root / f"{b}.npz")]) == 0
    return root, cfg


def test_simulate_writes_records(work):
    root, _ = work
    props = json.loads((root / "records" / "properties.json").read_text())
    assert set(props) == {"2-story", "3-story", "4-story"}
    assert any((root / "records" / "4-story").iterdir())


def test_weights_default_table(capsys):
    assert cli.main(["weights", "--target", "12-story"]) == 0
    rep = json.loads(capsys.readouterr().out)
    w = rep["combined"]["weights"]
    assert abs(sum(w) - 1) < 1e-12


def test_weights_to_file(work, tmp_path):
    root, _ = work
    out = tmp_path / "w.json"
    assert cli.main(["weights", "--properties", str(root / "records" / "properties.json"),
                     "--target", "4-story", "--props", "H,T1", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["combined"]["properties"] == ["H", "T1"]


def test_train_and_evaluate(work, tmp_path):
    root, _ = work
    model = tmp_path / "model"
    assert cli.main(["--seed", "3", "train", "--sources", str(root / "2-story.npz"),
                     "--target", str(root / "4-story.npz"), "--mode", "mdan",
                     "--epochs", "1", "--width", "4", "--out", str(model)]) == 0
    meta = json.loads((model / "model.json").read_text())
    assert meta["train"]["seed"] == 3 and (model / "log.jsonl").exists()
    ev = tmp_path / "eval"
    assert cli.main(["evaluate", "--model", str(model), "--data", str(root / "4-story.npz"),
                     "--out", str(ev)]) == 0
    metrics = json.loads((ev / "metrics.json").read_text())
    assert 0 <= metrics["accuracy"] <= 1
    rows = list(csv.DictReader(open(ev / "confusion.csv")))
    assert len(rows) == 2


def test_stats(work, tmp_path):
    root, _ = work
    assert cli.main(["stats", "--in", str(root / "records" / "2-story"),
                     "--out", str(tmp_path / "s.csv")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "s.csv")))
    assert [float(r["scale"]) for r in rows] == [0.6, 4.8]


def test_compare_and_sweep(work, tmp_path):
    _, cfg = work
    assert cli.main(["compare", "--config", str(cfg), "--out", str(tmp_path / "c"),
                     "--threads", "1"]) == 0
    assert (tmp_path / "c" / "summary.json").exists()
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "s" / "sweep.csv")))
    assert len(rows) == 2


def test_errors_are_stage_tagged(work, tmp_path, capsys):
    root, _ = work
    assert cli.main(["weights", "--target", "99-story"]) != 0
    assert "seismda weights: [config]" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"target": "x"}')
    assert cli.main(["compare", "--config", str(bad)]) != 0
    assert "[config]" in capsys.readouterr().err
    assert cli.main(["train", "--sources", str(root / "2-story.npz"), "--mode", "phymdan",
                     "--epochs", "1", "--out", str(tmp_path / "m")]) != 0
    assert "seismda train:" in capsys.readouterr().err
    assert cli.main(["preprocess", "--in", str(tmp_path / "nowhere")]) != 0


@pytest.mark.skipif(shutil.which("seismda") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["seismda", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate" in proc.stdout


def test_module_entry():
    proc = subprocess.run([sys.executable, "-m", "seismda.cli", "weights", "--target", "4-story",
                           "--sources", "2-story,8-story", "--properties", "/nonexistent"],
                          capture_output=True, text=True)
    assert proc.returncode != 0 and "seismda weights:" in proc.stderr

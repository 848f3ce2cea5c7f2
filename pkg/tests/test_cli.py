import csv
import io
import json
import subprocess
import sys

import pytest

from facet.annotations import save_via
from facet.cli import RunConfig, UsageError, main, resolve_config
from facet.fixtures import facade_dataset
from facet.losses import LossComponents, LossSeries, write_training_log


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


@pytest.fixture
def full_via(tmp_path, full_dataset):
    path = tmp_path / "facades.json"
    save_via(full_dataset, path)
    return path


@pytest.fixture
def identity_run(tmp_path, via_fixture):
    via, images, _ = via_fixture
    out = tmp_path / "out"
    assert run("synth", "--dataset", via, "--image-dir", images, "--output-dir", out) == 0
    return via, images, out


def test_stats_full_dataset_numbers(full_via, tmp_path, capsys):
    assert run("stats", "--dataset", full_via, "--output-dir", tmp_path / "o") == 0
    text = capsys.readouterr().out
    assert "images: 100" in text
    assert "instances: 1540" in text
    assert "mean instances per image: 15.4" in text
    st = json.loads((tmp_path / "o" / "stats.json").read_text())
    assert (st["n_images"], st["n_instances"], st["mean_instances_per_image"]) == (100, 1540, 15.4)
    assert (tmp_path / "o" / "histogram.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_eval_identity(identity_run, capsys):
    via, images, out = identity_run
    assert run("eval", "--dataset", via, "--image-dir", images,
               "--predictions", out / "predictions.jsonl", "--output-dir", out) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["map"] == 1.0 and rep["precision"] == 1.0 and rep["recall"] == 1.0
    assert rep["pixel_accuracy"] == 1.0
    assert (out / "pr_curve.png").exists()
    rows = list(csv.DictReader(io.StringIO((out / "report.csv").read_text())))
    assert len(rows) == 20


def test_sweep_three_rows(tmp_path, via_fixture, capsys):
    via, images, _ = via_fixture
    out = tmp_path / "s"
    assert run("synth", "--dataset", via, "--output-dir", out, "--score-noise", "0.6",
               "--drop-rate", "0.1", "--spurious-rate", "0.5") == 0
    assert run("sweep", "--dataset", via, "--predictions", out / "predictions.jsonl",
               "--thresholds", "0.5,0.7,0.9", "--output-dir", out) == 0
    rows = list(csv.DictReader(io.StringIO((out / "sweep.csv").read_text())))
    assert [float(r["threshold"]) for r in rows] == [0.5, 0.7, 0.9]
    rec = [float(r["recall"]) for r in rows]
    assert rec[0] >= rec[1] >= rec[2]
    assert (out / "sweep.png").exists()


def test_manifest_written(identity_run):
    _, _, out = identity_run
    m = json.loads((out / "run-manifest.json").read_text())
    assert m["tool"] == "facet" and m["subcommand"] == "synth"
    assert m["config"]["score_threshold"] == 0.9 and m["config"]["iou_threshold"] == 0.5
    assert m["outputs"] == ["predictions.jsonl"]


def test_reruns_byte_identical(identity_run):
    via, images, out = identity_run
    argv = ["eval", "--dataset", via, "--image-dir", images, "--predictions", out / "predictions.jsonl",
            "--output-dir", out]
    names = ["report.json", "report.csv", "run-manifest.json", "pr_curve.png"]
    assert run(*argv) == 0
    first = {n: (out / n).read_bytes() for n in names}
    assert run(*argv) == 0
    assert {n: (out / n).read_bytes() for n in names} == first


def test_jobs_do_not_change_report(identity_run):
    via, images, out = identity_run
    base = ["eval", "--dataset", via, "--image-dir", images, "--predictions", out / "predictions.jsonl",
            "--output-dir", out]
    assert run(*base, "--jobs", "1") == 0
    one = (out / "report.json").read_bytes()
    assert run(*base, "--jobs", "8") == 0
    assert (out / "report.json").read_bytes() == one


def test_split_and_kfold(full_via, tmp_path, capsys):
    out = tmp_path / "sp"
    assert run("split", "--dataset", full_via, "--output-dir", out) == 0
    assert "train: 80 images, val: 20 images" in capsys.readouterr().out
    train = json.loads((out / "train.json").read_text())
    assert len(train) == 80
    assert run("kfold", "--dataset", full_via, "--k", "3", "--output-dir", out) == 0
    folds = json.loads((out / "folds.json").read_text())
    assert folds["k"] == 3 and len(folds["folds"]) == 3


def test_augment_deterministic(tmp_path, via_fixture):
    via, images, _ = via_fixture
    outs = []
    for name in ("a", "b"):
        assert run("augment", "--dataset", via, "--image-dir", images, "--seed", "4", "--copies", "2",
                   "--output-dir", tmp_path / name) == 0
        outs.append((tmp_path / name / "augmented.json").read_bytes())
    assert outs[0] == outs[1]
    assert len(json.loads(outs[0])) == 40


def test_anchors(tmp_path, capsys):
    assert run("anchors", "--output-dir", tmp_path) == 0
    assert "9216 anchors" in capsys.readouterr().out
    lines = (tmp_path / "anchors.csv").read_text().splitlines()
    assert lines[0] == "x1,y1,x2,y2,score,label" and len(lines) == 9217


def test_render(identity_run, capsys):
    via, images, out = identity_run
    assert run("render", "--dataset", via, "--image-dir", images, "--predictions", out / "predictions.jsonl",
               "--image-format", "ppm", "--output-dir", out) == 0
    rendered = sorted(out.glob("*.overlap.ppm"))
    assert len(rendered) == 20
    assert rendered[0].read_bytes().startswith(b"P6\n320 240\n255\n")


def test_losses_command(tmp_path, capsys):
    train = [LossComponents(*(1.0 - i / 25,) * 5) for i in range(8)]
    log = tmp_path / "log.csv"
    log.write_text(write_training_log(LossSeries(list(range(1, 9)), train, train)))
    assert run("losses", "--log", log, "--output-dir", tmp_path) == 0
    sel = json.loads((tmp_path / "selection.json").read_text())
    assert sel["epoch"] == 8 and sel["criterion"] == "min_train_total"


def test_validate_lists_every_problem(tmp_path, capsys):
    bad = {
        "a1": {"filename": "a", "size": 1, "regions": [{"shape_attributes": {"name": "rect"}}]},
        "b1": {"filename": "b", "size": 1, "regions": [
            {"shape_attributes": {"name": "polygon", "all_points_x": [0, 1, 2], "all_points_y": [0, 1]}}]},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert run("validate", "--dataset", path) == 1
    err = capsys.readouterr().err
    assert "2 problem(s)" in err and "a1" in err and "b1" in err


def test_validate_ok(via_fixture, capsys):
    via, images, _ = via_fixture
    assert run("validate", "--dataset", via, "--image-dir", images, "--output-dir", via.parent / "v") == 0


def test_validate_reports_out_of_bounds(tmp_path, via_fixture, capsys):
    via, images, _ = via_fixture
    doc = json.loads(via.read_text())
    first = next(iter(doc.values()))
    first["regions"][0]["shape_attributes"]["all_points_x"][0] = 323
    via.write_text(json.dumps(doc))
    assert run("validate", "--dataset", via, "--image-dir", images) == 1


def test_missing_image_exit_code(tmp_path, via_fixture, capsys):
    via, _, _ = via_fixture
    preds = tmp_path / "p.jsonl"
    preds.write_text(json.dumps({"image": "ghost.png", "class": "window", "score": 1.0, "bbox": [0, 0, 1, 1]}) + "\n")
    assert run("eval", "--dataset", via, "--predictions", preds, "--output-dir", tmp_path) == 1
    assert "ghost.png" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert run("frobnicate") == 2
    assert run("stats", "--no-such-flag", "1") == 2
    assert run("stats") == 2
    assert run("eval", "--dataset", tmp_path / "x.json", "--iou-threshold", "abc") == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"iou_threshold": "high"}))
    assert run("anchors", "--config", cfg, "--output-dir", tmp_path) == 2
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run("anchors", "--config", cfg, "--output-dir", tmp_path) == 2


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"iou_threshold": 0.6, "score_threshold": 0.5, "seed": 3}))
    r = resolve_config(str(cfg), {"score_threshold": 0.7})
    assert (r.iou_threshold, r.score_threshold, r.seed) == (0.6, 0.7, 3)
    assert r.rotation_range == [-45.0, 45.0] and r.shear_range == [-16.0, 16.0]
    assert resolve_config(None, {}) == RunConfig()
    cfg.write_text('{"seed": true}')
    with pytest.raises(UsageError):
        resolve_config(str(cfg), {})


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "facet", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("facet ")

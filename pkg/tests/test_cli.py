import hashlib
import json

import pytest

from tapsense.cli import main

SMALL = ["--primitives", "4", "--max-taps", "40", "--seed", "0"]


def run_pipeline(root, out):
    assert main(["simulate", "--root", str(root), *SMALL]) == 0
    assert main(["extract", "--root", str(root)]) == 0
    assert main(["features", "--root", str(root), "--out", str(out)]) == 0
    common = ["--root", str(root), "--out", str(out), "--task", "material"]
    assert main(["train", *common, "--epochs", "2"]) == 0
    assert main(["eval", *common, "--baselines", "all"]) == 0
    assert main(["refine", "--root", str(root), "--out", str(out)]) == 0
    assert main(["report", "--out", str(out)]) == 0


def tree_digest(*dirs):
    h = hashlib.sha256()
    for d in dirs:
        for p in sorted(d.rglob("*")):
            if p.is_file() and "provenance" not in p.parts:
                h.update(str(p.relative_to(d)).encode())
                h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def first_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("run1")
    run_pipeline(base / "ds", base / "out")
    return base


def test_pipeline_writes_every_artifact(first_run, capsys):
    ds, out = first_run / "ds", first_run / "out"
    manifest = json.loads((ds / "manifest.json").read_text())
    assert len(manifest["objects"]) == 4
    for oid in (o["id"] for o in manifest["objects"]):
        assert (ds / "objects" / oid / "taps.txt").exists()
        assert (ds / "objects" / oid / "gt.xyz").exists()
        assert any((ds / "objects" / oid / "spec").glob("*.f32"))
    for name in ("features.csv", "material-seed0.ckpt", "eval-material-seed0.json", "refine-seed0.json",
                 "summary.csv", "splits/material-seed0.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "eval-material-seed0.json").read_text())
    assert {"nn_f1", "random_f1"} <= set(report["baselines"])
    prov = json.loads((out / "provenance" / "eval-material-seed0.json").read_text())
    assert prov["config"]["seed"] == 0 and prov["inputs"]
    assert main(["report", "--out", str(out)]) == 0
    assert "macro_f1" in capsys.readouterr().out


def test_same_seed_same_outputs(first_run, tmp_path):
    run_pipeline(tmp_path / "ds", tmp_path / "out")
    assert tree_digest(first_run / "ds", first_run / "out") == tree_digest(tmp_path / "ds", tmp_path / "out")


def test_root_from_environment(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("SONIC_DATA_ROOT", str(tmp_path / "envroot"))
    assert main(["simulate", "--primitives", "1", "--max-taps", "10"]) == 0
    assert (tmp_path / "envroot" / "manifest.json").exists()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"root": str(tmp_path / "a"), "primitives": 3, "max_taps": 10, "seed": 5}))
    assert main(["simulate", "--config", str(cfg), "--primitives", "1"]) == 0
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert len(manifest["objects"]) == 1 and manifest["seed"] == 5


def test_missing_mesh_dir_is_clean_error(tmp_path, capsys):
    assert main(["simulate", "--root", str(tmp_path), "--meshes", str(tmp_path / "nope")]) == 1
    assert "does not exist" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"bogus": 1}')
    assert main(["extract", "--config", str(cfg), "--root", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_extract_before_simulate(tmp_path, capsys):
    assert main(["extract", "--root", str(tmp_path / "empty")]) == 1
    assert capsys.readouterr().err


def test_train_before_extract_names_the_stage(tmp_path, capsys):
    assert main(["simulate", "--root", str(tmp_path), "--primitives", "4", "--max-taps", "10"]) == 0
    assert main(["train", "--root", str(tmp_path), "--out", str(tmp_path / "o"), "--task", "material"]) == 1
    assert "extract" in capsys.readouterr().err


def test_report_without_runs(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 0
    assert "no reports" in capsys.readouterr().out

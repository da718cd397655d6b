"""End-to-end CLI smoke: every subcommand on a miniature run."""

import json
import os

import pytest
import yaml
from click.testing import CliRunner

from posepyr.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Tiny dataset + 2-epoch training shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = {
        "model": {"base_width": 8, "num_keypoints": 5, "stage_blocks": [1, 1, 1],
                  "units_per_branch": 1, "num_deconv_modules": 1,
                  "deconv_residual_blocks": 1, "input_size": 32,
                  "stem_width": 16, "stage1_width": 16, "stage1_units": 1},
        "training": {"epochs": 2, "batch_size": 2, "seed": 1},
        "data": {"image_size": 32, "persons_min": 1, "persons_max": 1,
                 "scale_min": 12.0, "scale_max": 20.0, "seed": 1},
        "dataset_dir": str(root / "data"),
        "out_dir": str(root / "out"),
    }
    cfg_path = root / "run.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    runner = CliRunner()
    r = runner.invoke(main, ["gen-data", "--config", str(cfg_path),
                             "--out", str(root / "data"), "--num-images", "4"])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, ["train", "--config", str(cfg_path)])
    assert r.exit_code == 0, r.output
    return {"root": root, "cfg": str(cfg_path),
            "ckpt": str(root / "out" / "checkpoint.ckpt")}


def test_gen_data_outputs(workdir):
    data = workdir["root"] / "data"
    assert len(list((data / "images").iterdir())) == 4
    assert (data / "annotations.json").exists()


def test_train_outputs(workdir):
    out = workdir["root"] / "out"
    assert (out / "checkpoint.ckpt").exists()
    assert (out / "metrics.csv").read_text().splitlines()[1] == \
        "epoch,step,heatmap_loss,tag_loss,total_loss,lr"


def test_eval_emits_reports(workdir):
    runner = CliRunner()
    out = str(workdir["root"] / "eval_out")
    r = runner.invoke(main, ["eval", "--config", workdir["cfg"],
                             "--checkpoint", workdir["ckpt"], "--out", out,
                             "--no-flip"])
    assert r.exit_code == 0, r.output
    report = json.load(open(os.path.join(out, "report.json")))
    assert set(report) == {"AP", "AP50", "AP75", "AP_M", "AP_L", "AR"}
    assert "AP" in r.output
    assert os.path.exists(os.path.join(out, "results.json"))


def test_infer_writes_results(workdir):
    runner = CliRunner()
    out = str(workdir["root"] / "infer_out")
    r = runner.invoke(main, ["infer", "--config", workdir["cfg"],
                             "--checkpoint", workdir["ckpt"], "--out", out,
                             "--scales", "1.0"])
    assert r.exit_code == 0, r.output
    results = json.load(open(os.path.join(out, "results.json")))
    for rec in results:
        assert set(rec) == {"image_id", "category_id", "keypoints", "score"}


def test_inspect_prints_totals(workdir):
    runner = CliRunner()
    r = runner.invoke(main, ["inspect", "--config", workdir["cfg"]])
    assert r.exit_code == 0, r.output
    assert "stem" in r.output and "total" in r.output


def test_plot_emits_pngs(workdir):
    runner = CliRunner()
    out = str(workdir["root"] / "plots")
    r = runner.invoke(main, ["plot", "--config", workdir["cfg"],
                             "--checkpoint", workdir["ckpt"], "--out", out,
                             "--keypoints", "0,3"])
    assert r.exit_code == 0, r.output
    files = sorted(os.listdir(out))
    assert files == ["level0_kp0.png", "level0_kp3.png",
                     "level1_kp0.png", "level1_kp3.png", "overlay.png"]


def test_invalid_config_exits_nonzero(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"model": {"input_size": 100}}))
    runner = CliRunner()
    r = runner.invoke(main, ["inspect", "--config", str(bad)])
    assert r.exit_code != 0
    assert "invalid config" in r.output


def test_keypoint_count_mismatch_exits_nonzero(workdir, tmp_path):
    doc = yaml.safe_load(open(workdir["cfg"]))
    doc["model"]["num_keypoints"] = 17
    bad = tmp_path / "mismatch.yaml"
    bad.write_text(yaml.safe_dump(doc))
    runner = CliRunner()
    r = runner.invoke(main, ["train", "--config", str(bad)])
    assert r.exit_code != 0
    assert "keypoints" in r.output


def test_seed_override_changes_data(tmp_path):
    cfg = {"data": {"image_size": 32, "scale_min": 10.0, "scale_max": 20.0}}
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(cfg))
    runner = CliRunner()
    for seed, d in (("1", "d1"), ("2", "d2")):
        r = runner.invoke(main, ["gen-data", "--config", str(p), "--seed", seed,
                                 "--out", str(tmp_path / d), "--num-images", "1"])
        assert r.exit_code == 0, r.output
    a = (tmp_path / "d1" / "images" / "img_000000.png").read_bytes()
    b = (tmp_path / "d2" / "images" / "img_000000.png").read_bytes()
    assert a != b

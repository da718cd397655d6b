"""YAML run-config loading, validation, and the LR schedule."""

import pytest
import yaml

from posepyr.config import RunConfig, TrainConfig, dump_run_config, load_run_config


def _write(tmp_path, doc):
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(doc))
    return str(p)


def test_load_overrides_and_defaults(tmp_path):
    path = _write(tmp_path, {
        "model": {"base_width": 8, "num_keypoints": 5, "input_size": 128},
        "training": {"epochs": 10, "seed": 3},
        "inference": {"flip": False, "scales": [0.5, 1.0, 2.0]},
        "data": {"image_size": 128, "num_keypoints": 5},
        "dataset_dir": "/d", "out_dir": "/o",
    })
    cfg = load_run_config(path)
    assert cfg.model.base_width == 8
    assert cfg.model.stage_blocks == (1, 4, 3)      # untouched default
    assert cfg.training.epochs == 10
    assert cfg.inference.scales == (0.5, 1.0, 2.0)
    assert cfg.dataset_dir == "/d"


def test_unknown_key_rejected(tmp_path):
    path = _write(tmp_path, {"model": {"bass_width": 8}})
    with pytest.raises(ValueError, match="bass_width"):
        load_run_config(path)


def test_invalid_values_rejected(tmp_path):
    path = _write(tmp_path, {"model": {"input_size": 100}})
    with pytest.raises(ValueError):
        load_run_config(path)
    path = _write(tmp_path, {"training": {"lr_drops": [0.9, 0.5]}})
    with pytest.raises(ValueError):
        load_run_config(path)


def test_lr_schedule_fractional_drops():
    # mirrors 1e-3 -> 1e-4 -> 1e-5 at epochs 200 and 260 of 300
    t = TrainConfig(epochs=300, base_lr=1e-3)
    assert t.lr_at(0) == pytest.approx(1e-3)
    assert t.lr_at(199) == pytest.approx(1e-3)
    assert t.lr_at(200) == pytest.approx(1e-4)
    assert t.lr_at(259) == pytest.approx(1e-4)
    assert t.lr_at(260) == pytest.approx(1e-5)
    # proportions survive rescaled epoch counts
    s = TrainConfig(epochs=30, base_lr=1e-3)
    assert s.lr_at(19) == pytest.approx(1e-3)
    assert s.lr_at(20) == pytest.approx(1e-4)
    assert s.lr_at(26) == pytest.approx(1e-5)


def test_dump_round_trip(tmp_path):
    cfg = RunConfig()
    cfg.model.base_width = 8
    cfg.training.epochs = 7
    out = tmp_path / "dumped.yaml"
    dump_run_config(cfg, str(out))
    back = load_run_config(str(out))
    assert back.model.base_width == 8
    assert back.training.epochs == 7
    assert back.model.stage_blocks == cfg.model.stage_blocks

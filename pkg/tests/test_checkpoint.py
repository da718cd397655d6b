"""Checkpoint round trips, corruption handling, and mismatch reporting."""

import numpy as np
import pytest

from posepyr.checkpoint import (CheckpointError, MAGIC, load_checkpoint,
                                read_checkpoint, save_checkpoint)
from posepyr.model import build_model
from posepyr.optim import Adam

from conftest import toy_model_config


def _trained_toy(seed=0):
    model = build_model(toy_model_config(), rng_seed=seed)
    opt = Adam(list(model.parameters()), lr=1e-3)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(1, 3, 64, 64)).astype(np.float32)
    pyr = model.forward(x)
    from posepyr import autograd as ag
    ag.tensor_sum(ag.mul(pyr.levels[1], pyr.levels[1])).backward()
    opt.step()
    return model, opt


def test_round_trip_bitwise(tmp_path):
    model, opt = _trained_toy()
    path = tmp_path / "m.ckpt"
    save_checkpoint(str(path), model, opt, meta={"epoch": 3})
    model2 = build_model(toy_model_config(), rng_seed=99)
    meta = load_checkpoint(str(path), model2)
    assert meta == {"epoch": 3}
    for (n1, p1), (n2, p2) in zip(model.named_parameters(), model2.named_parameters()):
        assert n1 == n2
        assert np.array_equal(p1.data, p2.data), n1
        assert np.array_equal(p1.adam_m, p2.adam_m), n1
        assert p1.adam_step == p2.adam_step
    for (n1, b1), (n2, b2) in zip(model.named_buffers(), model2.named_buffers()):
        assert np.array_equal(b1, b2), n1


def test_save_is_deterministic(tmp_path):
    model, opt = _trained_toy()
    save_checkpoint(str(tmp_path / "a.ckpt"), model, opt, meta={"s": 1})
    save_checkpoint(str(tmp_path / "b.ckpt"), model, opt, meta={"s": 1})
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_shape_mismatch_names_parameter(tmp_path):
    model, _ = _trained_toy()
    path = tmp_path / "m.ckpt"
    save_checkpoint(str(path), model)
    other = build_model(toy_model_config(stem_width=32), rng_seed=0)
    with pytest.raises(CheckpointError, match="stem_conv1"):
        load_checkpoint(str(path), other)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOT-A-CHECKPOINT" + b"\x00" * 64)
    with pytest.raises(CheckpointError):
        read_checkpoint(str(path))


def test_header_lists_all_entries(tmp_path):
    model, opt = _trained_toy()
    path = tmp_path / "m.ckpt"
    save_checkpoint(str(path), model, opt)
    header, arrays = read_checkpoint(str(path))
    n_params = sum(1 for _ in model.named_parameters())
    n_buffers = sum(1 for _ in model.named_buffers())
    kinds = [e["kind"] for e in header["entries"]]
    assert kinds.count("param") == n_params
    assert kinds.count("buffer") == n_buffers
    assert kinds.count("adam_m") == n_params  # every parameter was stepped
    assert path.read_bytes().startswith(MAGIC)

"""Shared test helpers: finite-difference gradient checking and toy configs."""

import numpy as np
import pytest

from posepyr import autograd as ag
from posepyr.model import ModelConfig


def fd_gradcheck(fn, inputs, rng, rtol=1e-4, max_coords=12):
    """Central finite-difference check of `fn`'s analytic gradients.

    `fn` maps the given Tensors to a single output Tensor (any shape); the
    output is contracted to a scalar with a fixed random projection so every
    output element influences the loss. Gradients are compared at up to
    `max_coords` randomly sampled coordinates per input, in float64.
    """
    for t in inputs:
        assert t.data.dtype == np.float64, "gradcheck requires float64 inputs"

    out = fn(*inputs)
    proj = rng.normal(size=out.data.shape)

    def scalar():
        o = fn(*inputs)
        return float(np.sum(o.data * proj))

    loss = ag.tensor_sum(ag.mul(out, ag.Tensor(proj)))
    for t in inputs:
        t.zero_grad()
    loss.backward()

    for ti, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        assert t.grad is not None, f"input {ti} received no gradient"
        flat = t.data.reshape(-1)
        gflat = t.grad.reshape(-1)
        n = flat.size
        coords = rng.choice(n, size=min(max_coords, n), replace=False)
        for c in coords:
            orig = flat[c]
            h = 1e-4 * max(1.0, abs(orig))
            flat[c] = orig + h
            up = scalar()
            flat[c] = orig - h
            dn = scalar()
            flat[c] = orig
            fd = (up - dn) / (2.0 * h)
            an = gflat[c]
            denom = max(abs(fd), abs(an), 1.0)
            assert abs(fd - an) / denom < rtol, (
                f"input {ti} coord {c}: analytic {an:.8g} vs fd {fd:.8g}")


def toy_model_config(**overrides):
    kw = dict(base_width=8, num_keypoints=5, stage_blocks=(1, 1, 1),
              units_per_branch=1, num_deconv_modules=1,
              deconv_residual_blocks=1, input_size=64,
              stem_width=16, stage1_width=16, stage1_units=1)
    kw.update(overrides)
    return ModelConfig(**kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

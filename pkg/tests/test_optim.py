"""Adam update rule against a hand-simulated reference."""

import numpy as np
import pytest

from posepyr import autograd as ag
from posepyr.autograd import Parameter, Tensor
from posepyr.optim import Adam


def test_first_step_magnitude_is_lr():
    # with bias correction, the first update is lr * g/|g| elementwise (eps aside)
    p = Parameter(np.array([1.0, -2.0, 3.0]))
    p.grad = np.array([0.5, -0.1, 2.0])
    Adam([p], lr=1e-3).step()
    np.testing.assert_allclose(p.data, [1.0 - 1e-3, -2.0 + 1e-3, 3.0 - 1e-3],
                               atol=1e-7)


def test_none_grad_leaves_value():
    p = Parameter(np.array([4.0]))
    Adam([p], lr=0.1).step()
    assert p.data[0] == pytest.approx(4.0)


def test_ten_step_quadratic_matches_reference():
    # minimize f(w) = w^2 with autograd gradients; replay Adam by hand
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    p = Parameter(np.array([1.5]))
    opt = Adam([p], lr=lr, beta1=b1, beta2=b2, eps=eps)

    w_ref = 1.5
    m = v = 0.0
    for t in range(1, 11):
        loss = ag.mul(p, p)
        opt.zero_grad()
        ag.tensor_sum(loss).backward()
        opt.step()

        g = 2.0 * w_ref
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w_ref -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        assert p.data[0] == pytest.approx(w_ref, rel=1e-12)


def test_zero_grad_clears():
    p = Parameter(np.zeros(3))
    p.grad = np.ones(3)
    opt = Adam([p])
    opt.zero_grad()
    assert p.grad is None


def test_moments_live_on_parameter():
    p = Parameter(np.zeros(2))
    p.grad = np.ones(2)
    Adam([p]).step()
    assert p.adam_step == 1
    np.testing.assert_allclose(p.adam_m, 0.1 * np.ones(2))
    np.testing.assert_allclose(p.adam_v, 0.001 * np.ones(2))

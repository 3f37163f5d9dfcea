"""Hand-built MLP: forward/backward vs central finite differences, Adam, checkpoints."""
from __future__ import annotations

import numpy as np
import pytest

from semsched.nn import Adam, Mlp, load_checkpoint, save_checkpoint

from oracles import central_difference_grads, relative_grad_error


def test_init_is_uniform_fan_in_scaled():
    rng = np.random.default_rng(0)
    net = Mlp([32, 64, 8], rng)
    w0 = net.weights[0]
    bound = 1.0 / np.sqrt(32)
    assert w0.shape == (32, 64)
    assert np.abs(w0).max() <= bound
    assert np.abs(net.biases[0]).max() <= bound
    assert np.abs(net.weights[1]).max() <= 1.0 / np.sqrt(64)


def test_forward_shapes_and_hidden_relu():
    rng = np.random.default_rng(1)
    net = Mlp([5, 7, 3], rng)
    x = rng.standard_normal((11, 5))
    y, cache = net.forward(x)
    assert y.shape == (11, 3)
    # hidden activations are clamped at zero, output head is linear
    assert (cache[1] >= 0).all()
    single, _ = net.forward(x[0])
    assert single.shape == (3,)
    assert np.allclose(single, y[0], atol=1e-12)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(2)
    net = Mlp([6, 16, 12, 4], rng)
    x = rng.standard_normal((9, 6))
    proj = rng.standard_normal((9, 4))

    def loss_fn():
        out, _ = net.forward(x)
        return float(np.sum(out * proj))

    out, cache = net.forward(x)
    analytic = net.backward(cache, proj)
    numeric = central_difference_grads(loss_fn, net.parameters())
    assert relative_grad_error(analytic, numeric) <= 1e-4


def test_adam_first_step_matches_closed_form():
    rng = np.random.default_rng(3)
    net = Mlp([2, 2], rng)
    params = net.parameters()
    start = [p.copy() for p in params]
    grads = [np.full_like(p, 0.5) for p in params]
    opt = Adam(params, lr=3e-4)
    opt.step(grads)
    # bias corrections cancel at t=1: delta = -lr * g / (|g| + eps)
    expected_delta = -3e-4 * 0.5 / (0.5 + 1e-8)
    for p, s in zip(params, start):
        assert np.allclose(p - s, expected_delta, atol=1e-15)


def test_adam_descends_on_quadratic():
    rng = np.random.default_rng(4)
    w = np.array([5.0, -3.0])
    opt = Adam([w], lr=0.05)
    for _ in range(500):
        opt.step([2.0 * w])
    assert np.abs(w).max() < 1e-2


def test_checkpoint_roundtrip_and_width_validation(tmp_path):
    rng = np.random.default_rng(5)
    net = Mlp([4, 8, 3], rng)
    path = tmp_path / "net.npz"
    save_checkpoint(path, net, meta={"trained_updates": 7})
    loaded, meta = load_checkpoint(path)
    assert meta["trained_updates"] == 7
    assert loaded.widths == (4, 8, 3)
    x = rng.standard_normal((5, 4))
    ya, _ = net.forward(x)
    yb, _ = loaded.forward(x)
    assert np.array_equal(ya, yb)
    with pytest.raises(ValueError):
        load_checkpoint(path, expected_widths=(4, 9, 3))


def test_deterministic_init_given_seed():
    a = Mlp([3, 5, 2], np.random.default_rng(11))
    b = Mlp([3, 5, 2], np.random.default_rng(11))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa, pb)

"""Dense ReLU network with hand-written backprop, Adam, and npz checkpoints.

Everything is float64 numpy. `parameters()` hands out the live arrays so the
optimizer updates them in place and finite-difference tests can perturb them.
"""
from __future__ import annotations

import json

import numpy as np


class Mlp:
    """Fully connected network: ReLU hidden layers, linear output head."""

    def __init__(self, widths, rng: np.random.Generator | None = None):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        self.widths = widths
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            if rng is None:
                w = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                w = rng.uniform(-bound, bound, (fan_in, fan_out))
                b = rng.uniform(-bound, bound, fan_out)
            self.weights.append(w)
            self.biases.append(b)

    def forward(self, x):
        """Returns (output, cache); cache holds each layer's input activation."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        a = x[None, :] if squeeze else x
        cache = [a]
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            if layer == last:
                a = z
            else:
                a = np.maximum(z, 0.0)
                cache.append(a)
        return (a[0] if squeeze else a), cache

    def backward(self, cache, dout):
        """Gradients of sum(output * dout) in parameters() order."""
        g = np.asarray(dout, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        grads: list[np.ndarray | None] = [None] * (2 * len(self.weights))
        for layer in range(len(self.weights) - 1, -1, -1):
            a = cache[layer]
            grads[2 * layer] = a.T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            if layer > 0:
                g = (g @ self.weights[layer].T) * (a > 0.0)
        return grads

    def parameters(self) -> list[np.ndarray]:
        params: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params


class Adam:
    """Adam with bias correction; updates the given arrays in place."""

    def __init__(self, params, lr: float = 3e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        m_corr = 1.0 - self.beta1 ** self.t
        v_corr = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / m_corr) / (np.sqrt(v / v_corr) + self.eps)


def save_checkpoint(path, net: Mlp, meta: dict | None = None) -> None:
    arrays = {
        "widths": np.asarray(net.widths, dtype=np.int64),
        "meta_json": np.array(json.dumps(meta or {})),
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_checkpoint(path, expected_widths=None) -> tuple[Mlp, dict]:
    with np.load(path, allow_pickle=False) as data:
        widths = tuple(int(w) for w in data["widths"])
        if expected_widths is not None and widths != tuple(expected_widths):
            raise ValueError(
                f"checkpoint widths {widths} do not match expected "
                f"{tuple(expected_widths)}")
        net = Mlp(widths)
        for i in range(len(net.weights)):
            net.weights[i][...] = data[f"w{i}"]
            net.biases[i][...] = data[f"b{i}"]
        meta = json.loads(str(data["meta_json"]))
    return net, meta

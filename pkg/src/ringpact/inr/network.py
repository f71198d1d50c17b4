"""Small fully-connected network: two ReLU hidden layers, sigmoid output.

Forward/backward are written out explicitly so the whole reconstruction
stack differentiates without an autograd framework.
"""

from __future__ import annotations

import numpy as np

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


def mlp_init(in_dim: int, hidden: int, rng: np.random.Generator, dtype=np.float32) -> dict:
    """Kaiming-style uniform init scaled by fan-in; final bias 0 (sigmoid -> 0.5)."""

    def layer(n_in, n_out):
        bound = np.sqrt(6.0 / n_in)
        return rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype)

    return {
        "w1": layer(in_dim, hidden),
        "b1": np.zeros(hidden, dtype=dtype),
        "w2": layer(hidden, hidden),
        "b2": np.zeros(hidden, dtype=dtype),
        "w3": layer(hidden, 1),
        "b3": np.zeros(1, dtype=dtype),
    }


def mlp_forward(x: np.ndarray, params: dict) -> tuple[np.ndarray, tuple]:
    """Returns sigmoid(MLP(x)) as shape (n,) plus the backward cache."""
    z1 = x @ params["w1"] + params["b1"]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params["w2"] + params["b2"]
    a2 = np.maximum(z2, 0.0)
    z3 = a2 @ params["w3"] + params["b3"]
    y = 1.0 / (1.0 + np.exp(-z3[:, 0]))
    return y, (x, z1, a1, z2, a2, y)


def mlp_backward(dy: np.ndarray, cache: tuple, params: dict) -> tuple[np.ndarray, dict]:
    """Gradients of a scalar loss; ``dy`` has shape (n,).

    Returns (dx, parameter gradients).
    """
    x, z1, a1, z2, a2, y = cache
    dz3 = (dy * y * (1.0 - y))[:, None]
    grads = {
        "w3": a2.T @ dz3,
        "b3": dz3.sum(axis=0),
    }
    da2 = dz3 @ params["w3"].T
    dz2 = da2 * (z2 > 0)
    grads["w2"] = a1.T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ params["w2"].T
    dz1 = da1 * (z1 > 0)
    grads["w1"] = x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    dx = dz1 @ params["w1"].T
    return dx, grads


class Adam:
    """Adam with per-parameter state over a dict of arrays."""

    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            params[k] -= (lr / bias1) * m / (np.sqrt(v / bias2) + self.eps)

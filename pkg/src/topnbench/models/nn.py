"""Minimal dense feed-forward substrate with hand-written backpropagation."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .base import ConfigurationError, as_rng

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _act(name, z):
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return sigmoid(z)


def _act_grad(name, z, a):
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    return a * (1.0 - a)


class Dense:
    def __init__(self, n_in: int, n_out: int, activation: str = "identity", rng=None):
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        rng = as_rng(rng)
        limit = np.sqrt(6.0 / (n_in + n_out))
        self.weight = rng.uniform(-limit, limit, (n_in, n_out))
        self.bias = np.zeros(n_out)
        self.activation = activation

    @property
    def shape(self):
        return self.weight.shape


class DenseNet:
    """Chain of dense layers; ``forward`` returns the output and a cache for ``backward``."""

    def __init__(self, sizes: Sequence[int], activations: Sequence[str], rng=None):
        if len(activations) != len(sizes) - 1:
            raise ConfigurationError("need one activation per layer")
        rng = as_rng(rng)
        self.layers = [Dense(a, b, act, rng) for a, b, act in zip(sizes[:-1], sizes[1:], activations)]

    @classmethod
    def from_layers(cls, layers: Sequence[Dense]) -> DenseNet:
        for a, b in zip(layers[:-1], layers[1:]):
            if a.shape[1] != b.shape[0]:
                raise ConfigurationError("layer dimensions do not chain")
        net = cls.__new__(cls)
        net.layers = list(layers)
        return net

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def forward(self, x):
        cache = []
        for layer in self.layers:
            z = x @ layer.weight + layer.bias
            a = _act(layer.activation, z)
            cache.append((x, z, a))
            x = a
        return x, cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out):
        """Gradients in ``params()`` order, and the gradient w.r.t. the input."""
        grads = []
        g = grad_out
        for layer, (x, z, a) in zip(reversed(self.layers), reversed(cache)):
            dz = g * _act_grad(layer.activation, z, a)
            grads.append(dz.sum(axis=0))
            grads.append(x.T @ dz)
            g = dz @ layer.weight.T
        grads.reverse()
        return grads, g


class SGD:
    def __init__(self, params: list[np.ndarray], lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads):
        for p, g in zip(self.params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name: str, params, lr):
    if name == "sgd":
        return SGD(params, lr)
    if name == "adam":
        return Adam(params, lr)
    raise ConfigurationError(f"unknown optimizer {name!r}")


def gradient_check(
    params: Sequence[np.ndarray],
    loss: Callable[[], float],
    grads: Sequence[np.ndarray],
    probe_count: int = 20,
    h: float = 1e-6,
    seed=0,
    floor: float = 1e-8,
) -> float:
    """Worst relative error between ``grads`` and central differences of ``loss``.

    ``loss`` re-evaluates the objective from the current (in-place mutated) values
    of ``params``.  Probes are drawn uniformly over all scalar parameters.  The
    relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    rng = as_rng(seed)
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    flat = rng.choice(total, size=min(probe_count, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for f in flat:
        k = int(np.searchsorted(offsets, f, side="right") - 1)
        p = params[k].reshape(-1)
        if not np.shares_memory(p, params[k]):
            raise ValueError("gradient_check needs contiguous parameter arrays")
        j = int(f - offsets[k])
        old = p[j]
        p[j] = old + h
        up = loss()
        p[j] = old - h
        down = loss()
        p[j] = old
        numeric = (up - down) / (2 * h)
        analytic = float(np.asarray(grads[k]).reshape(-1)[j])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, err)
    return worst

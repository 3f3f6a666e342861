"""Perceptrons and a fully connected MLP baseline with fixed activations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .kan import validate_shape


def _relu_grad(z):
    return (z > 0).astype(float)


ACTIVATIONS = {
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "relu": (lambda z: np.maximum(z, 0.0), _relu_grad),
    "identity": (lambda z: z, np.ones_like),
}


def _activation(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise DomainError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


@dataclass
class Perceptron:
    weights: np.ndarray
    bias: float = 0.0
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        _activation(self.activation)


def perceptron_forward(p: Perceptron, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != p.weights.size:
        raise DomainError(f"perceptron expects {p.weights.size} inputs, got {x.size}")
    g, _ = _activation(p.activation)
    return float(g(np.dot(x, p.weights) + p.bias))


class MlpNetwork:
    """Affine layers with a shared hidden activation and a linear output layer.

    ``weights[l]`` has shape ``(n_{l+1}, n_l)``.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray], activation: str = "tanh"):
        if not weights or len(weights) != len(biases):
            raise DomainError("need one bias vector per weight matrix and at least one layer")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float).ravel() for b in biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[0] != b.size or min(w.shape) < 1:
                raise DomainError(f"layer {l}: weight {w.shape} and bias {b.shape} do not match")
            if l and w.shape[1] != self.weights[l - 1].shape[0]:
                raise DomainError(f"layer {l}: input width {w.shape[1]} does not chain")
        _activation(activation)
        self.activation = activation

    @classmethod
    def create(
        cls,
        shape: list[int],
        activation: str = "tanh",
        seed: int | None = 0,
        rng: np.random.Generator | None = None,
    ) -> "MlpNetwork":
        """Weights and biases uniform in +-1/sqrt(fan_in)."""
        shape = validate_shape(shape)
        rng = rng if rng is not None else np.random.default_rng(seed)
        weights, biases = [], []
        for n_in, n_out in zip(shape, shape[1:]):
            bound = 1.0 / np.sqrt(n_in)
            weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
            biases.append(rng.uniform(-bound, bound, size=n_out))
        return cls(weights, biases, activation)

    @property
    def shape(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def parameters(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def forward(self, x, cache: list | None = None) -> np.ndarray:
        h = np.asarray(x, dtype=float)
        single = h.ndim == 1
        if single:
            h = h[None, :]
        if h.ndim != 2 or h.shape[1] != self.shape[0]:
            raise DomainError(f"expected input width {self.shape[0]}, got shape {np.shape(x)}")
        g, _ = _activation(self.activation)
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            if cache is not None:
                cache.append((h, z))
            h = z if l == last else g(z)
        return h[0] if single else h

    __call__ = forward

    def backward(self, cache: list, grad_out: np.ndarray) -> list[np.ndarray]:
        _, dg = _activation(self.activation)
        grads = []
        g = grad_out
        last = len(self.weights) - 1
        for l in range(last, -1, -1):
            h, z = cache[l]
            if l != last:
                g = g * dg(z)
            grads.append((g.T @ h, g.sum(axis=0)))
            g = g @ self.weights[l]
        return [p for wb in reversed(grads) for p in wb]

    def copy(self) -> "MlpNetwork":
        return MlpNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)


def mlp_forward(net: MlpNetwork, x) -> np.ndarray:
    return net.forward(x)


def mlp_param_count(net: MlpNetwork) -> int:
    return sum(p.size for p in net.parameters())

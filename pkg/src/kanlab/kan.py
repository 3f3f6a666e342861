"""Kolmogorov-Arnold network layers built from B-spline edges.

A layer with ``n_in`` inputs and ``n_out`` outputs owns an ``n_out x n_in``
matrix of univariate edge functions; output node ``j`` is the sum over ``i``
of edge ``(j, i)`` applied to input ``i``.  All edges of a layer share one
uniform knot vector, so the coefficients are stored as a single
``(n_out, n_in, n_basis)`` array and evaluated a whole input column at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .interp import BasisEval, KnotVector, Spline1D, combine, evaluate_basis, spline_eval, uniform_knots

DEFAULT_DOMAIN = (-1.0, 1.0)


@dataclass
class Edge:
    spline: Spline1D
    linear_weight: float = 0.0
    linear_enabled: bool = False


def edge_eval(e: Edge, x: float) -> float:
    y = spline_eval(e.spline, x)
    if e.linear_enabled:
        y = y + e.linear_weight * x
    return y


@dataclass
class ActivationRecord:
    """Per-layer node values ``x_l`` (batch, n_l) and edge outputs (batch, n_{l+1}, n_l)."""

    pre_activations: list[np.ndarray] = field(default_factory=list)
    post_activations: list[np.ndarray] = field(default_factory=list)
    # per-layer, per-input basis tables kept for the backward pass
    bases: list[list[BasisEval]] = field(default_factory=list, repr=False)


def _sum_edges(post: np.ndarray) -> np.ndarray:
    # fixed ascending-index order keeps results reproducible bit-for-bit
    out = post[:, :, 0].copy()
    for i in range(1, post.shape[2]):
        out = out + post[:, :, i]
    return out


def _as_batch(x, width: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise DomainError(f"expected input width {width}, got shape {x.shape}")
    return x, single


class KanLayer:
    def __init__(
        self,
        n_in: int,
        n_out: int,
        grid_size: int = 5,
        degree: int = 3,
        domain: tuple[float, float] = DEFAULT_DOMAIN,
        coefficients: np.ndarray | None = None,
        linear_weights: np.ndarray | None = None,
        linear_enabled: bool = False,
    ):
        if n_in < 1 or n_out < 1:
            raise DomainError(f"layer sizes must be positive, got {n_in} -> {n_out}")
        self.n_in, self.n_out = int(n_in), int(n_out)
        self.grid_size, self.degree = int(grid_size), int(degree)
        self.domain = (float(domain[0]), float(domain[1]))
        self.knots: KnotVector = uniform_knots(self.domain, self.grid_size, self.degree)
        nb = self.knots.n_basis
        if coefficients is None:
            coefficients = np.zeros((self.n_out, self.n_in, nb))
        self.coefficients = np.array(coefficients, dtype=float)
        if self.coefficients.shape != (self.n_out, self.n_in, nb):
            raise DomainError(
                f"coefficients must have shape {(self.n_out, self.n_in, nb)}, got {self.coefficients.shape}"
            )
        if linear_weights is None:
            linear_weights = np.zeros((self.n_out, self.n_in))
        self.linear_weights = np.array(linear_weights, dtype=float)
        if self.linear_weights.shape != (self.n_out, self.n_in):
            raise DomainError("linear_weights must have shape (n_out, n_in)")
        self.linear_enabled = bool(linear_enabled)

    @classmethod
    def random(cls, n_in: int, n_out: int, rng: np.random.Generator, **kwargs) -> "KanLayer":
        """Coefficients i.i.d. uniform in +-0.1/sqrt(n_in); linear weights start at zero."""
        layer = cls(n_in, n_out, **kwargs)
        half = 0.1 / np.sqrt(n_in)
        layer.coefficients[...] = rng.uniform(-half, half, size=layer.coefficients.shape)
        return layer

    @property
    def n_basis(self) -> int:
        return self.knots.n_basis

    def edge(self, j: int, i: int) -> Edge:
        """Edge from input ``i`` to output ``j``; its spline shares this layer's storage."""
        return Edge(
            Spline1D(self.knots, self.coefficients[j, i]),
            float(self.linear_weights[j, i]),
            self.linear_enabled,
        )

    @property
    def edges(self) -> list[list[Edge]]:
        return [[self.edge(j, i) for i in range(self.n_in)] for j in range(self.n_out)]

    def parameters(self) -> list[np.ndarray]:
        params = [self.coefficients]
        if self.linear_enabled:
            params.append(self.linear_weights)
        return params

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def edge_outputs(
        self, x: np.ndarray, bases: list[BasisEval] | None = None, derivatives: bool = True
    ) -> np.ndarray:
        """Post-activations for a batch ``x`` of shape (batch, n_in) -> (batch, n_out, n_in).

        If ``bases`` is a list, the per-input basis tables are appended to it
        for a later :meth:`backward`; ``derivatives`` adds the slope tables
        needed to propagate gradients to ``x``.
        """
        post = np.empty((x.shape[0], self.n_out, self.n_in))
        for i in range(self.n_in):
            basis = evaluate_basis(self.knots, x[:, i], derivatives=bases is not None and derivatives)
            if bases is not None:
                bases.append(basis)
            vals = combine(self.coefficients[:, i, :], basis, self.degree)
            if self.linear_enabled:
                vals = vals + self.linear_weights[:, i, None] * x[:, i]
            post[:, :, i] = vals.T
        return post

    def forward(self, x) -> np.ndarray:
        xb, single = _as_batch(x, self.n_in)
        out = _sum_edges(self.edge_outputs(xb))
        return out[0] if single else out

    def backward(
        self,
        x: np.ndarray,
        grad_out: np.ndarray,
        bases: list[BasisEval] | None = None,
        input_grad: bool = True,
    ) -> tuple[list[np.ndarray], np.ndarray | None]:
        """Gradients w.r.t. this layer's parameters and its input, given dL/d(output).

        Edge outputs are linear in the coefficients, so dL/d(alpha_{j,i,k}) is
        the upstream gradient weighted by ``B_k(x_i)``.  Inputs that were
        clamped onto the grid boundary see zero spline slope.
        """
        g_coef = np.zeros_like(self.coefficients)
        g_lin = np.zeros_like(self.linear_weights)
        g_x = np.zeros_like(x)
        p, nb = self.degree, self.n_basis
        rows = np.arange(x.shape[0])
        for i in range(self.n_in):
            basis = bases[i] if bases else evaluate_basis(self.knots, x[:, i], derivatives=input_grad)
            dense = np.zeros((x.shape[0], nb))
            for r in range(p + 1):
                dense[rows, basis.span - p + r] = basis.values[r]
            g_coef[:, i, :] = grad_out.T @ dense
            if self.linear_enabled:
                g_lin[:, i] = grad_out.T @ x[:, i]
            if not input_grad:
                continue
            slope = combine(self.coefficients[:, i, :], basis, p, "derivatives")
            slope = np.where(basis.inside, slope, 0.0)
            if self.linear_enabled:
                slope = slope + self.linear_weights[:, i, None]
            g_x[:, i] = np.sum(grad_out * slope.T, axis=1)
        grads = [g_coef]
        if self.linear_enabled:
            grads.append(g_lin)
        return grads, (g_x if input_grad else None)

    def copy(self) -> "KanLayer":
        return KanLayer(
            self.n_in,
            self.n_out,
            self.grid_size,
            self.degree,
            self.domain,
            self.coefficients.copy(),
            self.linear_weights.copy(),
            self.linear_enabled,
        )


def layer_forward(layer: KanLayer, x) -> tuple[np.ndarray, ActivationRecord]:
    xb, single = _as_batch(x, layer.n_in)
    post = layer.edge_outputs(xb)
    out = _sum_edges(post)
    record = ActivationRecord([xb], [post])
    return (out[0] if single else out), record


class KanNetwork:
    def __init__(self, layers: list[KanLayer]):
        if not layers:
            raise DomainError("a network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.n_out != b.n_in:
                raise DomainError(f"layer widths do not chain: {a.n_out} -> {b.n_in}")
        self.layers = list(layers)

    @classmethod
    def create(
        cls,
        shape: list[int],
        grid_size: int = 5,
        degree: int = 3,
        domain: tuple[float, float] = DEFAULT_DOMAIN,
        linear: bool = False,
        seed: int | None = 0,
        rng: np.random.Generator | None = None,
    ) -> "KanNetwork":
        shape = validate_shape(shape)
        rng = rng if rng is not None else np.random.default_rng(seed)
        layers = [
            KanLayer.random(
                n_in, n_out, rng, grid_size=grid_size, degree=degree, domain=domain, linear_enabled=linear
            )
            for n_in, n_out in zip(shape, shape[1:])
        ]
        return cls(layers)

    @property
    def shape(self) -> list[int]:
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    @property
    def grid_size(self) -> int:
        return self.layers[0].grid_size

    @property
    def degree(self) -> int:
        return self.layers[0].degree

    def parameters(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x, record: ActivationRecord | None = None) -> np.ndarray:
        h, single = _as_batch(x, self.layers[0].n_in)
        for l, layer in enumerate(self.layers):
            bases = [] if record is not None else None
            # the network input needs no gradient, so layer 0 skips slope tables
            post = layer.edge_outputs(h, bases, derivatives=l > 0)
            if record is not None:
                record.bases.append(bases)
                record.pre_activations.append(h)
                record.post_activations.append(post)
            h = _sum_edges(post)
        return h[0] if single else h

    __call__ = forward

    def backward(self, record: ActivationRecord, grad_out: np.ndarray) -> list[np.ndarray]:
        grads: list[list[np.ndarray]] = []
        g = grad_out
        bases = record.bases or [None] * len(self.layers)
        for l in range(len(self.layers) - 1, -1, -1):
            layer_grads, g = self.layers[l].backward(
                record.pre_activations[l], g, bases[l], input_grad=l > 0
            )
            grads.append(layer_grads)
        return [p for layer_grads in reversed(grads) for p in layer_grads]

    def copy(self) -> "KanNetwork":
        return KanNetwork([layer.copy() for layer in self.layers])


def network_forward(net: KanNetwork, x) -> np.ndarray:
    return net.forward(x)


def validate_shape(shape) -> list[int]:
    shape = [int(n) for n in shape]
    if len(shape) < 2:
        raise DomainError(f"shape needs at least two widths, got {shape}")
    if any(n < 1 for n in shape):
        raise DomainError(f"all widths must be positive, got {shape}")
    return shape


def kat_shape(n: int) -> list[int]:
    """Width profile ``[n, 2n+1, 1]`` of the two-layer superposition network."""
    if n < 1:
        raise DomainError(f"input dimension must be >= 1, got {n}")
    return [n, 2 * n + 1, 1]


def param_count(net: KanNetwork) -> int:
    return sum(layer.param_count() for layer in net.layers)

"""Loss, gradients and plain gradient-descent training for KAN and MLP models.

All randomness flows from one ``numpy.random.Generator`` seeded per run
(``np.random.default_rng(seed)``, i.e. the PCG64 bit generator), so identical
seeds and configs reproduce results bit-for-bit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError
from .interp import spline_fit, uniform_knots
from .kan import ActivationRecord, KanLayer, KanNetwork, param_count
from .mlp import MlpNetwork, mlp_param_count

Model = Union[KanNetwork, MlpNetwork]

DIVERGENCE_LIMIT = 1e12


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    split: np.ndarray | None = None  # per-row "train" / "test" tags

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        targets = np.asarray(self.targets, dtype=float)
        self.targets = targets[:, None] if targets.ndim == 1 else targets
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DomainError(
                f"{self.inputs.shape[0]} inputs but {self.targets.shape[0]} targets"
            )
        if self.split is not None:
            self.split = np.asarray(self.split)
            if self.split.shape != (self.inputs.shape[0],):
                raise DomainError("split needs one tag per row")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, tag: str) -> "Dataset":
        if self.split is None:
            return self if tag == "train" else Dataset(self.inputs[:0], self.targets[:0])
        mask = self.split == tag
        return Dataset(self.inputs[mask], self.targets[mask])

    @classmethod
    def concat(cls, train: "Dataset", test: "Dataset") -> "Dataset":
        split = np.array(["train"] * len(train) + ["test"] * len(test))
        return cls(
            np.vstack([train.inputs, test.inputs]), np.vstack([train.targets, test.targets]), split
        )


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    steps: int = 2000
    batch_size: int | None = None  # None means full batch
    seed: int = 0
    normalize_inputs: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DomainError(f"learning rate must be positive, got {self.learning_rate}")
        if self.steps < 1:
            raise DomainError(f"steps must be positive, got {self.steps}")
        if self.batch_size is not None and self.batch_size < 1:
            raise DomainError(f"batch size must be positive, got {self.batch_size}")


@dataclass
class AffineTransform:
    """Per-dimension map ``x -> x * scale + offset``; degenerate dims map to 0."""

    scale: np.ndarray
    offset: np.ndarray
    degenerate: np.ndarray

    def apply(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.scale + self.offset

    def to_dict(self) -> dict:
        return {
            "scale": self.scale.tolist(),
            "offset": self.offset.tolist(),
            "degenerate": self.degenerate.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineTransform":
        return cls(
            np.asarray(d["scale"], dtype=float),
            np.asarray(d["offset"], dtype=float),
            np.asarray(d["degenerate"], dtype=bool),
        )


@dataclass
class TrainReport:
    losses: list[float]
    final_train_rmse: float
    final_test_rmse: float
    wall_ms: float
    params: int
    seed: int
    diverged: bool = False
    diverged_step: int | None = None
    transform: AffineTransform | None = field(default=None, repr=False)

    def summary(self, include_time: bool = False) -> dict:
        out = {
            "final_train_rmse": _fmt(self.final_train_rmse),
            "final_test_rmse": _fmt(self.final_test_rmse),
            "params": str(self.params),
            "seed": str(self.seed),
            "diverged": str(self.diverged).lower(),
        }
        if self.diverged:
            out["diverged_step"] = str(self.diverged_step)
        if include_time:
            out["wall_ms"] = f"{self.wall_ms:.3f}"
        return out

    def to_csv(self, include_time: bool = False) -> str:
        """``step,loss`` rows, a blank line, then ``key=value`` summary lines.

        Wall time is opt-in because it would make otherwise identical runs differ.
        """
        lines = ["step,loss"]
        lines += [f"{i},{_fmt(v)}" for i, v in enumerate(self.losses)]
        lines.append("")
        lines += [f"{k}={v}" for k, v in self.summary(include_time).items()]
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return repr(float(v))


def read_report(text: str) -> tuple[list[list[str]], dict[str, str]]:
    """Split a report document into CSV rows (header first) and its summary block."""
    rows, summary = [], {}
    table_done = False
    for line in text.splitlines():
        if not line.strip():
            table_done = True
            continue
        if table_done:
            key, _, value = line.partition("=")
            summary[key] = value
        else:
            rows.append(line.split(","))
    return rows, summary


def mse_loss(preds, targets) -> float:
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape:
        raise DomainError(f"shape mismatch: {preds.shape} vs {targets.shape}")
    if preds.size == 0:
        raise DomainError("loss of an empty batch is undefined")
    diff = preds - targets
    return float(np.mean(diff * diff))


def rmse(preds, targets) -> float:
    return math.sqrt(mse_loss(preds, targets))


def count_params(net: Model) -> int:
    return param_count(net) if isinstance(net, KanNetwork) else mlp_param_count(net)


def _check_batch(net: Model, inputs, targets) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(targets, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] == 0:
        raise DomainError("empty batch")
    if x.shape[1] != net.shape[0] or y.shape != (x.shape[0], net.shape[-1]):
        raise DomainError(
            f"batch shapes {x.shape} -> {y.shape} do not match network shape {net.shape}"
        )
    return x, y


def backward(net: Model, inputs, targets) -> tuple[float, list[np.ndarray]]:
    """Mean squared error of ``net`` on the batch and its exact gradient.

    Gradients come back in the order of ``net.parameters()``.
    """
    x, y = _check_batch(net, inputs, targets)
    if isinstance(net, KanNetwork):
        record = ActivationRecord()
        preds = net.forward(x, record)
    else:
        record = []
        preds = net.forward(x, record)
    diff = preds - y
    loss = float(np.mean(diff * diff))
    grad_out = 2.0 * diff / diff.size
    return loss, net.backward(record, grad_out)


def finite_diff_grad(net: Model, inputs, targets, h: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradient of the MSE loss, one parameter at a time."""
    if not h > 0:
        raise DomainError(f"step h must be positive, got {h}")
    x, y = _check_batch(net, inputs, targets)
    grads = []
    for param in net.parameters():
        g = np.zeros_like(param)
        flat, gflat = param.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = mse_loss(net.forward(x), y)
            flat[k] = orig - h
            down = mse_loss(net.forward(x), y)
            flat[k] = orig
            gflat[k] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(a: list[np.ndarray], b: list[np.ndarray], floor: float = 1e-8, rtol: float = 1e-5) -> float:
    """Largest ``|a-b| / max(|a|, |b|, floor/rtol)``; below ``rtol`` means a pass."""
    worst = 0.0
    for ga, gb in zip(a, b):
        scale = np.maximum(np.maximum(np.abs(ga), np.abs(gb)), floor / rtol)
        if ga.size:
            worst = max(worst, float(np.max(np.abs(ga - gb) / scale)))
    return worst


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> list[np.ndarray]:
    """In-place ``theta <- theta - lr * g`` for every parameter array; returns ``params``."""
    if len(params) != len(grads):
        raise DomainError(f"{len(params)} parameter arrays but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise DomainError(f"parameter shape {np.shape(p)} vs gradient {np.shape(g)}")
    for p, g in zip(params, grads):
        p -= lr * np.asarray(g)
    return params


def normalize_inputs(data: Dataset) -> tuple[Dataset, AffineTransform]:
    """Map each input dimension's observed [min, max] onto [-1, 1]."""
    if len(data) == 0:
        raise DomainError("cannot normalize an empty dataset")
    lo = data.inputs.min(axis=0)
    hi = data.inputs.max(axis=0)
    width = hi - lo
    degenerate = width == 0
    scale = np.where(degenerate, 0.0, 2.0 / np.where(degenerate, 1.0, width))
    offset = np.where(degenerate, 0.0, -1.0 - lo * scale)
    transform = AffineTransform(scale, offset, degenerate)
    return Dataset(transform.apply(data.inputs), data.targets, data.split), transform


def train(net: Model, data: Dataset, cfg: TrainConfig) -> TrainReport:
    """Gradient descent on the ``train`` rows of ``data``; ``net`` is updated in place."""
    start = time.perf_counter()
    rng = make_rng(cfg.seed)
    transform = None
    train_set, test_set = data.subset("train"), data.subset("test")
    if len(train_set) == 0:
        raise DomainError("no training rows")
    if cfg.normalize_inputs:
        train_set, transform = normalize_inputs(train_set)
        test_set = Dataset(transform.apply(test_set.inputs), test_set.targets)
    x, y = _check_batch(net, train_set.inputs, train_set.targets)
    n = x.shape[0]
    batch = n if cfg.batch_size is None else min(cfg.batch_size, n)
    params = net.parameters()
    losses: list[float] = []
    order = np.arange(n)
    cursor = n
    diverged_step = None
    for step in range(cfg.steps):
        if batch == n:
            xb, yb = x, y
        else:
            if cursor + batch > n:
                order = rng.permutation(n)
                cursor = 0
            idx = order[cursor : cursor + batch]
            cursor += batch
            xb, yb = x[idx], y[idx]
        loss, grads = backward(net, xb, yb)
        losses.append(loss)
        if not math.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            diverged_step = step
            break
        sgd_step(params, grads, cfg.learning_rate)
    if diverged_step is None:
        train_rmse = rmse(net.forward(x), y)
        test_rmse = rmse(net.forward(test_set.inputs), test_set.targets) if len(test_set) else float("nan")
    else:
        train_rmse = test_rmse = float("nan")
    return TrainReport(
        losses=losses,
        final_train_rmse=train_rmse,
        final_test_rmse=test_rmse,
        wall_ms=(time.perf_counter() - start) * 1e3,
        params=count_params(net),
        seed=cfg.seed,
        diverged=diverged_step is not None,
        diverged_step=diverged_step,
        transform=transform,
    )


def grid_refine(net: KanNetwork, new_grid_size: int, samples_per_basis: int = 8) -> KanNetwork:
    """Project every edge spline onto a finer uniform grid by least squares.

    When the new grid is an integer multiple of the old one the old spline
    space is nested in the new one and the projection is exact up to rounding.
    """
    if new_grid_size < net.grid_size:
        raise DomainError(f"new grid size {new_grid_size} is smaller than current {net.grid_size}")
    layers = []
    for layer in net.layers:
        kv = uniform_knots(layer.domain, new_grid_size, layer.degree)
        n_samples = max(samples_per_basis * kv.n_basis, 256)
        xs = np.linspace(layer.domain[0], layer.domain[1], n_samples)
        coef = np.empty((layer.n_out, layer.n_in, kv.n_basis))
        for j in range(layer.n_out):
            for i in range(layer.n_in):
                old = layer.coefficients[j, i]
                if np.all(old == old[0]):
                    # partition of unity: a constant stays exactly constant
                    coef[j, i] = old[0]
                    continue
                coef[j, i] = spline_fit(xs, layer.edge(j, i).spline(xs), kv).coefficients
        layers.append(
            KanLayer(
                layer.n_in,
                layer.n_out,
                new_grid_size,
                layer.degree,
                layer.domain,
                coef,
                layer.linear_weights.copy(),
                layer.linear_enabled,
            )
        )
    return KanNetwork(layers)

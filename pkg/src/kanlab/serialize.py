"""JSON text format for trained networks.

Floats are written with ``repr`` precision, which round-trips IEEE doubles
exactly, so ``load(save(net))`` evaluates bit-identically to ``net``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from .errors import DomainError
from .kan import KanLayer, KanNetwork
from .mlp import MlpNetwork
from .train import AffineTransform

FORMAT_VERSION = 1

Model = Union[KanNetwork, MlpNetwork]


def to_dict(net: Model, transform: AffineTransform | None = None) -> dict:
    if isinstance(net, KanNetwork):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": "kan",
            "shape": net.shape,
            "layers": [
                {
                    "degree": layer.degree,
                    "grid_size": layer.grid_size,
                    "domain": list(layer.domain),
                    "linear_enabled": layer.linear_enabled,
                    "coefficients": layer.coefficients.tolist(),
                    "linear_weights": layer.linear_weights.tolist(),
                }
                for layer in net.layers
            ],
        }
    elif isinstance(net, MlpNetwork):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": "mlp",
            "shape": net.shape,
            "activation": net.activation,
            "layers": [
                {"weights": w.tolist(), "biases": b.tolist()} for w, b in zip(net.weights, net.biases)
            ],
        }
    else:
        raise TypeError(f"cannot serialize {type(net).__name__}")
    if transform is not None:
        doc["input_transform"] = transform.to_dict()
    return doc


def from_dict(doc: dict) -> tuple[Model, AffineTransform | None]:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DomainError(f"unsupported model format version {version!r}")
    kind = doc.get("kind")
    if kind == "kan":
        layers = []
        for entry, (n_in, n_out) in zip(doc["layers"], zip(doc["shape"], doc["shape"][1:])):
            layers.append(
                KanLayer(
                    n_in,
                    n_out,
                    grid_size=entry["grid_size"],
                    degree=entry["degree"],
                    domain=tuple(entry["domain"]),
                    coefficients=entry["coefficients"],
                    linear_weights=entry["linear_weights"],
                    linear_enabled=entry["linear_enabled"],
                )
            )
        net: Model = KanNetwork(layers)
    elif kind == "mlp":
        net = MlpNetwork(
            [layer["weights"] for layer in doc["layers"]],
            [layer["biases"] for layer in doc["layers"]],
            doc["activation"],
        )
    else:
        raise DomainError(f"unknown model kind {kind!r}")
    if net.shape != list(doc["shape"]):
        raise DomainError(f"layer data describe shape {net.shape}, header says {doc['shape']}")
    transform = doc.get("input_transform")
    return net, (AffineTransform.from_dict(transform) if transform else None)


def dumps(net: Model, transform: AffineTransform | None = None) -> str:
    return json.dumps(to_dict(net, transform), indent=1) + "\n"


def loads(text: str) -> tuple[Model, AffineTransform | None]:
    return from_dict(json.loads(text))


def save(net: Model, path, transform: AffineTransform | None = None) -> None:
    Path(path).write_text(dumps(net, transform), newline="\n")


def load(path) -> tuple[Model, AffineTransform | None]:
    return loads(Path(path).read_text())

"""B-spline interpolation, Kolmogorov-Arnold networks, and grid-scaling experiments."""

from .errors import DomainError
from .interp import KnotVector, Spline1D, bspline_basis, spline_eval, spline_fit, uniform_knots
from .kan import KanLayer, KanNetwork, kat_shape, network_forward, param_count
from .mlp import MlpNetwork, mlp_forward
from .train import Dataset, TrainConfig, TrainReport, backward, finite_diff_grad, train

__all__ = [
    "DomainError",
    "KnotVector",
    "Spline1D",
    "bspline_basis",
    "spline_eval",
    "spline_fit",
    "uniform_knots",
    "KanLayer",
    "KanNetwork",
    "kat_shape",
    "network_forward",
    "param_count",
    "MlpNetwork",
    "mlp_forward",
    "Dataset",
    "TrainConfig",
    "TrainReport",
    "backward",
    "finite_diff_grad",
    "train",
]

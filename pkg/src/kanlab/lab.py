"""Scaling experiments: error versus grid size, input dimension, and parameter budget.

The grid sweep measures how the sup-norm error of a trained KAN falls as the
spline grid is refined and fits the exponent on log-log axes.  For smooth
targets and degree-``k`` splines the expected exponent is ``-(k + 1)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable

import numpy as np

from .errors import DomainError
from .interp import spline_fit, uniform_knots
from .kan import KanNetwork, kat_shape, validate_shape
from .mlp import MlpNetwork
from .train import Dataset, TrainConfig, count_params, make_rng, train

PLATEAU_RATIO = 0.8  # an error improvement below 20% ends the fit window
NOISE_FLOOR = 1e-12  # errors this small are rounding noise, not approximation error
ORACLE_FLOOR = 1e-10  # least-squares solves carry some conditioning on top of rounding
DIMENSION_RATIO_LIMIT = 5.0

SWEEP_CONFIG = TrainConfig(learning_rate=0.9, steps=20000)


# ---------------------------------------------------------------------------
# Target functions
# ---------------------------------------------------------------------------


def _sin1d(x):
    return np.sin(np.pi * x[:, 0])


def _poly3(x):
    return x[:, 0] ** 3 - x[:, 0]


def _additive(x):
    return np.sin(np.pi * x).sum(axis=1) / x.shape[1]


_C2_LO, _C2_HI = math.exp(-1.0), math.exp(2.0)


def _composite2(x):
    raw = np.exp(np.sin(np.pi * x[:, 0]) + x[:, 1] ** 2)
    return 2.0 * (raw - _C2_LO) / (_C2_HI - _C2_LO) - 1.0


def _constant(value, x):
    return np.full(x.shape[0], float(value))


@dataclass(frozen=True)
class TargetFunction:
    name: str
    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float] = (-1.0, 1.0)

    def __call__(self, x) -> np.ndarray:
        """Evaluate on an ``(N, dim)`` batch; returns ``(N, 1)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise DomainError(f"target {self.name} takes {self.dim} inputs, got {x.shape[1]}")
        return self.fn(x)[:, None]


def constant_target(value: float = 0.0, dim: int = 1) -> TargetFunction:
    return TargetFunction(f"const{dim}d", dim, partial(_constant, value))


TARGETS = {
    "sin1d": lambda: TargetFunction("sin1d", 1, _sin1d),
    "poly3": lambda: TargetFunction("poly3", 1, _poly3),
    "composite2": lambda: TargetFunction("composite2", 2, _composite2),
    "zero": lambda: constant_target(0.0, 1),
}


def get_target(name: str, dim: int | None = None) -> TargetFunction:
    """Look up a built-in target; ``additive_<n>`` (or ``additive`` with ``dim``) is the n-D sum of sines."""
    if name.startswith("additive"):
        suffix = name.partition("_")[2]
        n = int(suffix) if suffix else dim
        if not n or n < 1:
            raise DomainError(f"additive target needs a positive dimension, got {name!r}")
        return TargetFunction(f"additive_{n}", n, _additive)
    if name == "zero" and dim:
        return constant_target(0.0, dim)
    try:
        return TARGETS[name]()
    except KeyError:
        raise DomainError(
            f"unknown target {name!r}; choose from {sorted(TARGETS) + ['additive_<n>']}"
        ) from None


def synthesize_dataset(
    target: TargetFunction, n_train: int, n_test: int, seed: int, test_grid: bool = False
) -> Dataset:
    """Uniform random inputs on the target's domain; ``test_grid`` makes 1-D test points a uniform grid."""
    if n_train < 1 or n_test < 1:
        raise DomainError("sample counts must be positive")
    rng = make_rng(seed)
    lo, hi = target.domain
    x_train = rng.uniform(lo, hi, size=(n_train, target.dim))
    if test_grid and target.dim == 1:
        x_test = np.linspace(lo, hi, n_test)[:, None]
    else:
        x_test = rng.uniform(lo, hi, size=(n_test, target.dim))
    return Dataset.concat(Dataset(x_train, target(x_train)), Dataset(x_test, target(x_test)))


# ---------------------------------------------------------------------------
# Log-log fitting
# ---------------------------------------------------------------------------


def fit_loglog_slope(gs, errs, plateau_index: int | None = None) -> tuple[float, float, float]:
    """Least-squares line through ``(log G, log err)``; points from ``plateau_index`` on are dropped."""
    gs = np.asarray(gs, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if plateau_index is not None:
        gs, errs = gs[:plateau_index], errs[:plateau_index]
    if gs.size < 2 or gs.size != errs.size:
        raise DomainError("need at least two (G, error) pairs to fit a slope")
    if np.any(~np.isfinite(errs)) or np.any(errs <= 0) or np.any(gs <= 0):
        raise DomainError("grid sizes and errors must be finite and positive")
    lx, ly = np.log(gs), np.log(errs)
    slope, intercept = np.polyfit(lx, ly, 1)
    ss_res = float(np.sum((ly - (slope * lx + intercept)) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def find_plateau(errs) -> int | None:
    """Index of the first error that improves on its predecessor by less than 20%."""
    for i in range(1, len(errs)):
        if not errs[i] < PLATEAU_RATIO * errs[i - 1]:
            return i
    return None


# ---------------------------------------------------------------------------
# Grid sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepPoint:
    grid_size: int
    params: int
    rmse_test: float
    maxabs_test: float
    diverged: bool
    oracle_maxabs: float = float("nan")


@dataclass
class ScalingReport:
    target: str
    degree: int
    points: list[SweepPoint]
    slope: float = float("nan")
    intercept: float = float("nan")
    r2: float = float("nan")
    plateau_grid: int | None = None
    degenerate: bool = False
    smoothness_order: int = 0  # errors are measured in the sup norm (m = 0)

    @property
    def grid_sizes(self) -> list[int]:
        return [p.grid_size for p in self.points]

    @property
    def maxabs(self) -> list[float]:
        return [p.maxabs_test for p in self.points]

    def to_csv(self) -> str:
        lines = ["G,params,rmse_test,maxabs_test,diverged"]
        for p in self.points:
            lines.append(
                f"{p.grid_size},{p.params},{p.rmse_test!r},{p.maxabs_test!r},{str(p.diverged).lower()}"
            )
        lines.append("")
        summary = {
            "target": self.target,
            "degree": self.degree,
            "m": self.smoothness_order,
            "slope": repr(self.slope),
            "intercept": repr(self.intercept),
            "r2": repr(self.r2),
            "plateau_G": "none" if self.plateau_grid is None else self.plateau_grid,
            "degenerate": str(self.degenerate).lower(),
        }
        lines += [f"{k}={v}" for k, v in summary.items()]
        return "\n".join(lines) + "\n"


def _errors(net, data: Dataset) -> tuple[float, float]:
    test = data.subset("test")
    diff = net.forward(test.inputs) - test.targets
    return math.sqrt(float(np.mean(diff * diff))), float(np.max(np.abs(diff)))


def _sweep_point(target, data, grid_size, degree, shape, cfg, scale_lr) -> SweepPoint:
    net = KanNetwork.create(shape, grid_size=grid_size, degree=degree, seed=cfg.seed)
    run_cfg = replace(cfg, learning_rate=cfg.learning_rate * grid_size) if scale_lr else cfg
    report = train(net, data, run_cfg)
    if report.diverged:
        return SweepPoint(grid_size, report.params, float("nan"), float("nan"), True)
    rmse_test, maxabs = _errors(net, data)
    oracle = float("nan")
    if target.dim == 1:
        oracle = least_squares_oracle(target, data, grid_size, degree)
    return SweepPoint(grid_size, report.params, rmse_test, maxabs, False, oracle)


def least_squares_oracle(target: TargetFunction, data: Dataset, grid_size: int, degree: int) -> float:
    """Max-abs test error of the direct least-squares spline fit (1-D targets only)."""
    train_set, test = data.subset("train"), data.subset("test")
    kv = uniform_knots(target.domain, grid_size, degree)
    s = spline_fit(train_set.inputs[:, 0], train_set.targets[:, 0], kv)
    return float(np.max(np.abs(s(test.inputs[:, 0]) - test.targets[:, 0])))


def default_train_size(dim: int) -> int:
    return 4096 if dim == 1 else 8192


def scaling_sweep(
    target: TargetFunction,
    grid_sizes: list[int],
    degree: int = 3,
    shape: list[int] | None = None,
    cfg: TrainConfig = SWEEP_CONFIG,
    n_train: int | None = None,
    n_test: int = 1024,
    jobs: int = 1,
    scale_lr: bool = True,
    test_grid: bool = True,
) -> ScalingReport:
    """Train a fresh KAN per grid size and fit the error exponent.

    With ``scale_lr`` the step size is ``cfg.learning_rate * G``: basis
    functions narrow as ``1/G``, so the loss curvature in coefficient space
    shrinks by the same factor and a fixed step would slow finer grids down.
    """
    grid_sizes = [int(g) for g in grid_sizes]
    if not grid_sizes or any(b <= a for a, b in zip(grid_sizes, grid_sizes[1:])):
        raise DomainError(f"grid sizes must be non-empty and strictly increasing, got {grid_sizes}")
    if grid_sizes[0] < 1:
        raise DomainError("grid sizes must be positive")
    shape = validate_shape(shape or [target.dim, 1])
    if shape[0] != target.dim or shape[-1] != 1:
        raise DomainError(f"shape {shape} does not match a {target.dim}-input scalar target")
    n_train = n_train or default_train_size(target.dim)
    if n_train < grid_sizes[-1] + degree:
        raise DomainError(
            f"{n_train} training points cannot determine {grid_sizes[-1] + degree} coefficients"
        )
    data = synthesize_dataset(target, n_train, n_test, cfg.seed, test_grid=test_grid)
    run = partial(_sweep_point, target, data, degree=degree, shape=shape, cfg=cfg, scale_lr=scale_lr)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(run, grid_sizes))
    else:
        points = [run(g) for g in grid_sizes]
    report = ScalingReport(target.name, degree, points)
    _fit_report(report)
    return report


def _fit_report(report: ScalingReport) -> None:
    good = [p for p in report.points if not p.diverged]
    errs = [p.maxabs_test for p in good]
    plateau = find_plateau(errs)
    report.plateau_grid = good[plateau].grid_size if plateau is not None else None
    window = errs[:plateau] if plateau is not None else errs
    gs = [p.grid_size for p in good][: len(window)]
    oracle = [p.oracle_maxabs for p in good]
    # a target the spline space already contains has no approximation error to scale
    exact = bool(oracle) and all(e < ORACLE_FLOOR for e in oracle)
    if exact or len(window) < 2 or max(window) < NOISE_FLOOR or min(window) <= 0:
        report.degenerate = True
        return
    report.slope, report.intercept, report.r2 = fit_loglog_slope(gs, window)


# ---------------------------------------------------------------------------
# Dimension experiment
# ---------------------------------------------------------------------------


@dataclass
class DimensionRow:
    dim: int
    shape: list[int]
    params: int
    rmse_test: float
    maxabs_test: float
    diverged: bool


@dataclass
class DimensionReport:
    grid_size: int
    degree: int
    n_train: int
    rows: list[DimensionRow]
    ratios: dict[int, float] = field(default_factory=dict)  # rmse(n) / rmse(1)
    flagged: bool = False

    def to_csv(self) -> str:
        lines = ["n,shape,params,rmse_test,maxabs_test,diverged"]
        for r in self.rows:
            shape = "-".join(map(str, r.shape))
            lines.append(
                f"{r.dim},{shape},{r.params},{r.rmse_test!r},{r.maxabs_test!r},{str(r.diverged).lower()}"
            )
        lines.append("")
        lines += [f"G={self.grid_size}", f"degree={self.degree}", f"n_train={self.n_train}"]
        lines += [f"ratio_n{n}={v!r}" for n, v in sorted(self.ratios.items())]
        lines.append(f"flagged={str(self.flagged).lower()}")
        return "\n".join(lines) + "\n"


def _dimension_row(n, grid_size, degree, cfg, n_train, n_test) -> DimensionRow:
    target = get_target("additive", dim=n)
    data = synthesize_dataset(target, n_train, n_test, cfg.seed)
    shape = kat_shape(n)
    net = KanNetwork.create(shape, grid_size=grid_size, degree=degree, seed=cfg.seed)
    report = train(net, data, cfg)
    if report.diverged:
        return DimensionRow(n, shape, report.params, float("nan"), float("nan"), True)
    rmse_test, maxabs = _errors(net, data)
    return DimensionRow(n, shape, report.params, rmse_test, maxabs, False)


# lr 0.2 already oscillates at n = 4; 0.1 is stable for n <= 4
DIMENSION_CONFIG = TrainConfig(learning_rate=0.1, steps=3000)


def dimension_experiment(
    dims: list[int],
    grid_size: int = 8,
    degree: int = 3,
    cfg: TrainConfig = DIMENSION_CONFIG,
    n_train: int = 8192,
    n_test: int = 1024,
    jobs: int = 1,
) -> DimensionReport:
    """Train ``[n, 2n+1, 1]`` KANs on the additive target for each ``n`` at a fixed grid and data size.

    The report is flagged when any dimension's test RMSE exceeds five times
    the ``n = 1`` baseline.
    """
    dims = [int(n) for n in dims]
    if not dims:
        raise DomainError("dims must be non-empty")
    if any(n < 1 for n in dims):
        raise DomainError(f"dimensions must be positive, got {dims}")
    run = partial(_dimension_row, grid_size=grid_size, degree=degree, cfg=cfg, n_train=n_train, n_test=n_test)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run, dims))
    else:
        rows = [run(n) for n in dims]
    report = DimensionReport(grid_size, degree, n_train, rows)
    base = next((r for r in rows if r.dim == 1 and not r.diverged), None)
    if base is not None and base.rmse_test > 0:
        for r in rows:
            report.ratios[r.dim] = r.rmse_test / base.rmse_test if not r.diverged else float("inf")
        report.flagged = any(v > DIMENSION_RATIO_LIMIT for v in report.ratios.values())
    else:
        report.flagged = any(r.diverged for r in rows)
    return report


# ---------------------------------------------------------------------------
# KAN versus MLP at matched parameter count
# ---------------------------------------------------------------------------


@dataclass
class ComparisonReport:
    target: str
    budget: int
    kan_shape: list[int]
    kan_grid: int
    kan_params: int
    kan_rmse: float
    mlp_shape: list[int]
    mlp_params: int
    mlp_rmse: float

    @property
    def ratio(self) -> float:
        """KAN test RMSE divided by MLP test RMSE (``nan`` when both are zero)."""
        if self.mlp_rmse == 0:
            return 1.0 if self.kan_rmse == 0 else float("inf")
        return self.kan_rmse / self.mlp_rmse

    def to_csv(self) -> str:
        lines = [
            "model,shape,grid,params,rmse_test",
            f"kan,{'-'.join(map(str, self.kan_shape))},{self.kan_grid},{self.kan_params},{self.kan_rmse!r}",
            f"mlp,{'-'.join(map(str, self.mlp_shape))},,{self.mlp_params},{self.mlp_rmse!r}",
            "",
            f"target={self.target}",
            f"budget={self.budget}",
            f"ratio={self.ratio!r}",
        ]
        return "\n".join(lines) + "\n"


def _kan_params(shape, grid_size, degree) -> int:
    return sum(a * b for a, b in zip(shape, shape[1:])) * (grid_size + degree)


def _mlp_params(shape) -> int:
    return sum(a * b + b for a, b in zip(shape, shape[1:]))


def minimum_budget(dim: int, degree: int = 3) -> int:
    return max(_mlp_params([dim, 2, 1]), _kan_params([dim, 1], 4, degree))


def match_budget(dim: int, budget: int, degree: int = 3) -> tuple[list[int], int, list[int]]:
    """Closest KAN (shape, G) and MLP shape to ``budget``, each within 10% of it."""
    lo, hi = 0.9 * budget, 1.1 * budget
    kan = []
    for width in [None] + list(range(1, budget + 1)):
        shape = [dim, 1] if width is None else [dim, width, 1]
        if _kan_params(shape, 4, degree) > hi:
            break
        for g in range(4, budget + 1):
            n = _kan_params(shape, g, degree)
            if n > hi:
                break
            if n >= lo:
                kan.append((abs(n - budget), len(shape), g, shape))
    mlp = []
    for width in range(2, budget + 1):
        shape = [dim, width, 1]
        n = _mlp_params(shape)
        if n > hi:
            break
        if n >= lo:
            mlp.append((abs(n - budget), width, shape))
    if not kan or not mlp:
        raise DomainError(f"no KAN/MLP pair within 10% of a budget of {budget} parameters")
    _, _, grid, kan_shape = min(kan, key=lambda c: c[:3])
    mlp_shape = min(mlp, key=lambda c: c[:2])[2]
    return kan_shape, grid, mlp_shape


def kan_vs_mlp(
    target: TargetFunction,
    param_budget: int,
    cfg: TrainConfig = TrainConfig(),
    degree: int = 3,
    n_train: int | None = None,
    n_test: int = 1024,
) -> ComparisonReport:
    """Train a KAN and an MLP of matched size with the same seed and step count."""
    minimum = minimum_budget(target.dim, degree)
    if param_budget < minimum:
        raise DomainError(f"parameter budget {param_budget} is below the minimum of {minimum}")
    kan_shape, grid, mlp_shape = match_budget(target.dim, param_budget, degree)
    data = synthesize_dataset(target, n_train or default_train_size(target.dim), n_test, cfg.seed)
    kan = KanNetwork.create(kan_shape, grid_size=grid, degree=degree, seed=cfg.seed)
    mlp = MlpNetwork.create(mlp_shape, seed=cfg.seed)
    rmses = []
    for net in (kan, mlp):
        report = train(net, data, cfg)
        rmses.append(float("nan") if report.diverged else _errors(net, data)[0])
    return ComparisonReport(
        target.name,
        param_budget,
        kan_shape,
        grid,
        count_params(kan),
        rmses[0],
        mlp_shape,
        count_params(mlp),
        rmses[1],
    )

"""Command-line entry point.

Exit codes: 0 success, 2 usage or parse error, 3 numerical failure
(divergence, failed gradient check), 4 I/O error.
"""

from __future__ import annotations

import argparse
import bisect
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .errors import DomainError
from .interp import (
    LagrangePoly,
    cubic_spline_fit,
    lagrange_eval,
    linear_interpolate,
    spline_fit,
    uniform_knots,
)
from .kan import KanNetwork, validate_shape
from .lab import default_train_size, dimension_experiment, get_target, scaling_sweep, synthesize_dataset
from .mlp import MlpNetwork
from .train import TrainConfig, backward, finite_diff_grad, max_relative_error, train

EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 2, 3, 4
GRADCHECK_RTOL = 1e-5

# built-in defaults per subcommand; a --config file and then flags override these
DEFAULTS = {
    "interp": {"method": "linear", "target": "sin1d", "points": 50, "degree": 5, "out": "interp.csv"},
    "fit": {
        "model": "kan",
        "target": "sin1d",
        "shape": "1,1",
        "grid": "10",
        "degree": 3,
        "seed": 0,
        "lr": 0.05,
        "steps": 2000,
        "train_size": None,
        "test_size": 1024,
        "batch_size": None,
        "activation": "tanh",
        "linear": False,
        "normalize": False,
        "record_time": False,
        "out": "fit.csv",
        "model_out": None,
    },
    "sweep": {
        "target": "sin1d",
        "shape": None,
        "grid": "4,8,16,32",
        "degree": 3,
        "seed": 0,
        "lr": 0.9,
        "steps": 20000,
        "train_size": None,
        "test_size": 1024,
        "jobs": 1,
        "out": "sweep.csv",
    },
    "gradcheck": {"model": "kan", "shape": "2,5,1", "grid": "5", "degree": 3, "seed": 0, "batch": 16, "out": None},
    "dims": {
        "dims": "1,2,4",
        "grid": "8",
        "degree": 3,
        "seed": 0,
        "lr": 0.1,
        "steps": 3000,
        "train_size": 8192,
        "test_size": 1024,
        "jobs": 1,
        "out": "dims.csv",
    },
}


class UsageError(Exception):
    pass


def parse_int_list(text: str, name: str) -> list[int]:
    try:
        values = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated integers, got {text!r}") from None
    if not values:
        raise UsageError(f"--{name} is empty")
    return values


def parse_shape(text: str) -> list[int]:
    shape = parse_int_list(text, "shape")
    try:
        return validate_shape(shape)
    except DomainError as exc:
        raise UsageError(f"--shape: {exc}") from None


def read_config(path: str) -> dict[str, str]:
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _coerce(value, default):
    if isinstance(value, str) and default is not None and not isinstance(default, str):
        if isinstance(default, bool):
            return value.lower() in ("1", "true", "yes", "on")
        try:
            return type(default)(value)
        except ValueError:
            raise UsageError(f"cannot parse config value {value!r}") from None
    return value


def resolve(args: argparse.Namespace) -> dict:
    defaults = DEFAULTS[args.command]
    config = read_config(args.config) if args.config else {}
    unknown = set(config) - set(defaults)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {sorted(unknown)}")
    opts = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            opts[key] = flag
        elif key in config:
            opts[key] = _coerce(config[key], default)
        else:
            opts[key] = default
    return opts


def _write(path, text: str) -> None:
    try:
        Path(path).write_text(text, newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _target(name: str):
    try:
        return get_target(name)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def _config(opts) -> TrainConfig:
    try:
        return TrainConfig(
            learning_rate=float(opts["lr"]),
            steps=int(opts["steps"]),
            batch_size=opts.get("batch_size"),
            seed=int(opts["seed"]),
            normalize_inputs=bool(opts.get("normalize", False)),
        )
    except DomainError as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _interpolant(method: str, xs: np.ndarray, ys: np.ndarray, degree: int, domain):
    if method == "linear":
        def f(x):
            i = min(max(bisect.bisect_right(xs, x) - 1, 0), xs.size - 2)
            return linear_interpolate((xs[i], ys[i]), (xs[i + 1], ys[i + 1]), x)
        return f
    if method == "lagrange":
        poly = LagrangePoly(xs, ys)
        return lambda x: lagrange_eval(poly, x)
    if method == "cubic":
        return cubic_spline_fit(xs, ys)
    # about two nodes per grid cell keeps the normal equations well conditioned
    grid = max(1, min((xs.size - 1) // 2, xs.size - degree))
    spline = spline_fit(xs, ys, uniform_knots(domain, grid, degree))
    return lambda x: float(spline(np.array([x]))[0])


def cmd_interp(opts) -> int:
    target = _target(opts["target"])
    if target.dim != 1:
        raise UsageError(f"interp needs a 1-D target, {target.name} has {target.dim} inputs")
    n = int(opts["points"])
    if n < 2:
        raise UsageError("--points must be at least 2")
    lo, hi = target.domain
    nodes = np.linspace(lo, hi, n)
    values = target(nodes[:, None])[:, 0]
    f = _interpolant(opts["method"], nodes, values, int(opts["degree"]), target.domain)
    probes = np.union1d(np.linspace(lo, hi, 1001), nodes)
    truth = target(probes[:, None])[:, 0]
    lines = ["x,f_true,f_interp,abs_err"]
    for x, y in zip(probes, truth):
        fx = float(f(float(x)))
        lines.append(f"{float(x)!r},{float(y)!r},{fx!r},{abs(fx - float(y))!r}")
    _write(opts["out"], "\n".join(lines) + "\n")
    return 0


def cmd_fit(opts) -> int:
    target = _target(opts["target"])
    shape = parse_shape(opts["shape"])
    if shape[0] != target.dim:
        raise UsageError(f"shape {shape} takes {shape[0]} inputs but {target.name} has {target.dim}")
    grid = parse_int_list(opts["grid"], "grid")[0]
    cfg = _config(opts)
    n_train = opts["train_size"] or default_train_size(target.dim)
    data = synthesize_dataset(target, int(n_train), int(opts["test_size"]), cfg.seed)
    if opts["model"] == "kan":
        net = KanNetwork.create(shape, grid_size=grid, degree=int(opts["degree"]), linear=opts["linear"], seed=cfg.seed)
    else:
        net = MlpNetwork.create(shape, activation=opts["activation"], seed=cfg.seed)
    report = train(net, data, cfg)
    _write(opts["out"], report.to_csv(include_time=opts["record_time"]))
    model_out = opts["model_out"] or str(Path(opts["out"]).with_suffix(".model.json"))
    if not report.diverged:
        try:
            serialize.save(net, model_out, report.transform)
        except OSError as exc:
            raise OSError(f"cannot write {model_out}: {exc.strerror}") from exc
    for key, value in report.summary(include_time=True).items():
        print(f"{key}={value}")
    return EXIT_NUMERIC if report.diverged else 0


def cmd_sweep(opts) -> int:
    target = _target(opts["target"])
    grids = parse_int_list(opts["grid"], "grid")
    if any(b <= a for a, b in zip(grids, grids[1:])) or grids[0] < 1:
        raise UsageError(f"--grid must be strictly increasing positive integers, got {grids}")
    shape = parse_shape(opts["shape"]) if opts["shape"] else None
    cfg = _config(opts)
    n_train = opts["train_size"] and int(opts["train_size"])
    try:
        report = scaling_sweep(
            target,
            grids,
            degree=int(opts["degree"]),
            shape=shape,
            cfg=cfg,
            n_train=n_train,
            n_test=int(opts["test_size"]),
            jobs=int(opts["jobs"]),
        )
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    _write(opts["out"], report.to_csv())
    print(f"slope={report.slope!r}")
    print(f"degenerate={str(report.degenerate).lower()}")
    return 0


def cmd_gradcheck(opts) -> int:
    shape = parse_shape(opts["shape"])
    seed = int(opts["seed"])
    rng = np.random.default_rng(seed)
    if opts["model"] == "kan":
        grid = parse_int_list(opts["grid"], "grid")[0]
        net = KanNetwork.create(shape, grid_size=grid, degree=int(opts["degree"]), rng=rng)
    else:
        net = MlpNetwork.create(shape, rng=rng)
    batch = int(opts["batch"])
    x = rng.uniform(-1.0, 1.0, size=(batch, shape[0]))
    y = rng.normal(size=(batch, shape[-1]))
    _, grads = backward(net, x, y)
    err = max_relative_error(grads, finite_diff_grad(net, x, y, h=1e-5), rtol=GRADCHECK_RTOL)
    ok = err < GRADCHECK_RTOL
    summary = f"max_rel_err={err!r}\nresult={'pass' if ok else 'fail'}\n"
    print(summary, end="")
    if opts["out"]:
        _write(opts["out"], summary)
    return 0 if ok else EXIT_NUMERIC


def cmd_dims(opts) -> int:
    dims = parse_int_list(opts["dims"], "dims")
    cfg = _config(opts)
    try:
        report = dimension_experiment(
            dims,
            grid_size=parse_int_list(opts["grid"], "grid")[0],
            degree=int(opts["degree"]),
            cfg=cfg,
            n_train=int(opts["train_size"]),
            n_test=int(opts["test_size"]),
            jobs=int(opts["jobs"]),
        )
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    _write(opts["out"], report.to_csv())
    for n, ratio in sorted(report.ratios.items()):
        print(f"ratio_n{n}={ratio!r}")
    print(f"flagged={str(report.flagged).lower()}")
    return 0


COMMANDS = {
    "interp": cmd_interp,
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "dims": cmd_dims,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--target", help="built-in target: sin1d, poly3, composite2, additive_<n>, zero")
    common.add_argument("--shape", help="comma-separated layer widths, e.g. 2,5,1")
    common.add_argument("--grid", help="grid size G (comma-separated list for sweep)")
    common.add_argument("--degree", type=int, help="spline degree k")
    common.add_argument("--seed", type=int)
    common.add_argument("--lr", type=float, help="learning rate")
    common.add_argument("--steps", type=int, help="gradient-descent steps")
    common.add_argument("--out", help="output file")
    common.add_argument("--jobs", type=int, help="parallel runs for sweep/dims")
    common.add_argument("--config", help="key=value file; flags take precedence over it")

    parser = argparse.ArgumentParser(prog="kanlab", description="KAN spline approximation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("interp", parents=[common], help="interpolate a target and write errors as CSV")
    p.add_argument("--method", choices=["linear", "lagrange", "cubic", "bspline"])
    p.add_argument("--points", type=int, help="number of interpolation nodes")

    p = sub.add_parser("fit", parents=[common], help="train one model and write its loss curve")
    p.add_argument("--model", choices=["kan", "mlp"])
    p.add_argument("--train-size", type=int)
    p.add_argument("--test-size", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--activation", choices=["tanh", "relu", "identity"])
    p.add_argument("--linear", action="store_true", help="enable the per-edge linear term")
    p.add_argument("--normalize", action="store_true", help="rescale inputs to [-1, 1]")
    p.add_argument("--record-time", action="store_true", help="include wall_ms in the report file")
    p.add_argument("--model-out", help="serialized model path (default: <out>.model.json)")

    p = sub.add_parser("sweep", parents=[common], help="error versus grid size")
    p.add_argument("--train-size", type=int)
    p.add_argument("--test-size", type=int)

    p = sub.add_parser("gradcheck", parents=[common], help="backprop versus finite differences")
    p.add_argument("--model", choices=["kan", "mlp"])
    p.add_argument("--batch", type=int)

    p = sub.add_parser("dims", parents=[common], help="error versus input dimension")
    p.add_argument("--dims", help="comma-separated input dimensions")
    p.add_argument("--train-size", type=int)
    p.add_argument("--test-size", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except DomainError as exc:
        print(f"kanlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"kanlab: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())

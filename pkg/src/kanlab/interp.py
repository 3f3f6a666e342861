"""Interpolation primitives: linear, Lagrange, cubic Hermite splines and B-splines.

B-spline conventions used throughout the package:

* ``degree`` is the polynomial degree ``p`` (a cubic spline has ``p = 3``).
* Zeroth-degree bases live on half-open intervals ``[t_i, t_{i+1})``; the last
  non-empty interval is closed at the final knot so partition of unity holds
  pointwise on the whole supported domain.
* Any Cox-de Boor term whose denominator is zero is taken to be zero.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DomainError

ArrayLike = Union[float, Sequence[float], np.ndarray]


# ---------------------------------------------------------------------------
# Point sets, linear and Lagrange interpolation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointSet:
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float).ravel()
        ys = np.asarray(self.ys, dtype=float).ravel()
        if xs.size == 0 or xs.size != ys.size:
            raise DomainError(f"need matching non-empty xs/ys, got {xs.size} and {ys.size}")
        if np.any(np.diff(xs) <= 0):
            raise DomainError("abscissae must be strictly increasing")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __len__(self) -> int:
        return self.xs.size


def linear_interpolate(a: tuple[float, float], b: tuple[float, float], x: float) -> float:
    """Straight line through ``a`` and ``b`` evaluated at ``x`` (extrapolates)."""
    (xa, ya), (xb, yb) = a, b
    if xa == xb:
        raise DomainError(f"degenerate segment: both points at x={xa}")
    return ya + (yb - ya) * (x - xa) / (xb - xa)


def lagrange_basis(nodes: Sequence[float], i: int, x: float) -> float:
    nodes = np.asarray(nodes, dtype=float)
    if not 0 <= i < nodes.size:
        raise DomainError(f"basis index {i} out of range for {nodes.size} nodes")
    if np.any(np.diff(nodes) <= 0):
        raise DomainError("Lagrange nodes must be strictly increasing")
    xi = nodes[i]
    out = 1.0
    for j, xj in enumerate(nodes):
        if j != i:
            out *= (x - xj) / (xi - xj)
    return out


@dataclass(frozen=True)
class LagrangePoly:
    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = PointSet(self.nodes, self.values)
        object.__setattr__(self, "nodes", pts.xs)
        object.__setattr__(self, "values", pts.ys)

    def __call__(self, x: float) -> float:
        return lagrange_eval(self, x)


def lagrange_eval(poly: LagrangePoly, x: float) -> float:
    """Evaluate the interpolating polynomial as a sum of basis polynomials."""
    nodes = poly.nodes
    total = 0.0
    for i, yi in enumerate(poly.values):
        # at a node the product formula is exact anyway; this avoids 0 * inf noise
        if x == nodes[i]:
            return float(yi)
        li = 1.0
        for j, xj in enumerate(nodes):
            if j != i:
                li *= (x - xj) / (nodes[i] - xj)
        total += li * yi
    return total


# ---------------------------------------------------------------------------
# Cubic Hermite segments and cubic splines
# ---------------------------------------------------------------------------


def hermite_segment_eval(
    p0: tuple[float, float], p1: tuple[float, float], k1: float, k2: float, x: float
) -> float:
    """Cubic on ``[p0.x, p1.x]`` matching both end values and end slopes ``k1``, ``k2``."""
    (x1, y1), (x2, y2) = p0, p1
    if not x1 < x2:
        raise DomainError(f"segment endpoints must satisfy x1 < x2, got {x1}, {x2}")
    if not x1 <= x <= x2:
        raise DomainError(f"x={x} outside segment [{x1}, {x2}]")
    h = x2 - x1
    t = (x - x1) / h
    a = k1 * h - (y2 - y1)
    b = -k2 * h + (y2 - y1)
    return (1 - t) * y1 + t * y2 + t * (1 - t) * ((1 - t) * a + t * b)


def _hermite_second_derivative(x1, y1, x2, y2, k1, k2, x):
    h = x2 - x1
    t = (x - x1) / h
    a = k1 * h - (y2 - y1)
    b = -k2 * h + (y2 - y1)
    return (a * (6 * t - 4) + b * (2 - 6 * t)) / (h * h)


@dataclass(frozen=True)
class Clamped:
    """Clamped boundary: prescribed slopes at the first and last knot."""

    first: float
    last: float


NATURAL = "natural"
Boundary = Union[str, Clamped]


@dataclass(frozen=True)
class CubicSpline:
    xs: np.ndarray
    ys: np.ndarray
    slopes: np.ndarray
    boundary: Boundary = NATURAL

    def __post_init__(self):
        if len(self.slopes) != len(self.xs):
            raise DomainError("need exactly one slope per knot")

    def __call__(self, x: float) -> float:
        return cubic_spline_eval(self, x)

    def _segment(self, x: float) -> int:
        xs = self.xs
        if not xs[0] <= x <= xs[-1]:
            raise DomainError(f"x={x} outside spline domain [{xs[0]}, {xs[-1]}]")
        return min(max(bisect.bisect_right(xs, x) - 1, 0), xs.size - 2)

    def second_derivative(self, x: float, segment: int | None = None) -> float:
        """Second derivative at ``x``, taken on ``segment`` if given (one-sided at knots)."""
        i = self._segment(x) if segment is None else segment
        xs, ys, k = self.xs, self.ys, self.slopes
        return _hermite_second_derivative(xs[i], ys[i], xs[i + 1], ys[i + 1], k[i], k[i + 1], x)

    def second_derivative_jumps(self) -> np.ndarray:
        """``|q_i''(x_i) - q_{i+1}''(x_i)|`` at every interior knot."""
        xs = self.xs
        return np.array(
            [
                abs(self.second_derivative(xs[i], i - 1) - self.second_derivative(xs[i], i))
                for i in range(1, xs.size - 1)
            ]
        )


def thomas_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = len(diag)
    c = np.zeros(n)
    d = np.zeros(n)
    c[0] = upper[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * c[i - 1]
        if i < n - 1:
            c[i] = upper[i] / denom
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom
    out = np.empty(n)
    out[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        out[i] = d[i] - c[i] * out[i + 1]
    return out


def cubic_spline_fit(xs: ArrayLike, ys: ArrayLike, boundary: Boundary = NATURAL) -> CubicSpline:
    """Solve for knot slopes giving C2 continuity at every interior knot.

    Row ``i`` of the system equates the second derivatives of the two cubics
    meeting at ``x_i``.  A natural boundary zeroes the second derivative at
    both ends; a :class:`Clamped` boundary fixes the end slopes.
    """
    pts = PointSet(xs, ys)
    if len(pts) < 2:
        raise DomainError("cubic spline needs at least 2 points")
    x, y = pts.xs, pts.ys
    n = x.size
    inv_h = 1.0 / np.diff(x)
    dy = np.diff(y)
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    rhs = np.zeros(n)
    for i in range(1, n - 1):
        lower[i] = inv_h[i - 1]
        diag[i] = 2.0 * (inv_h[i - 1] + inv_h[i])
        upper[i] = inv_h[i]
        rhs[i] = 3.0 * (dy[i - 1] * inv_h[i - 1] ** 2 + dy[i] * inv_h[i] ** 2)
    if isinstance(boundary, Clamped):
        diag[0] = diag[-1] = 1.0
        rhs[0], rhs[-1] = boundary.first, boundary.last
    elif boundary == NATURAL:
        diag[0], upper[0] = 2.0 * inv_h[0], inv_h[0]
        rhs[0] = 3.0 * dy[0] * inv_h[0] ** 2
        lower[-1], diag[-1] = inv_h[-1], 2.0 * inv_h[-1]
        rhs[-1] = 3.0 * dy[-1] * inv_h[-1] ** 2
    else:
        raise DomainError(f"unknown boundary condition {boundary!r}")
    slopes = thomas_solve(lower, diag, upper, rhs)
    return CubicSpline(x, y, slopes, boundary)


def cubic_spline_eval(spline: CubicSpline, x: float) -> float:
    i = spline._segment(x)
    xs, ys, k = spline.xs, spline.ys, spline.slopes
    return hermite_segment_eval((xs[i], ys[i]), (xs[i + 1], ys[i + 1]), k[i], k[i + 1], x)


# ---------------------------------------------------------------------------
# B-splines
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KnotVector:
    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).ravel()
        knots.setflags(write=False)
        p = int(self.degree)
        if p < 0:
            raise DomainError(f"degree must be >= 0, got {p}")
        if np.any(np.diff(knots) < 0):
            raise DomainError("knots must be non-decreasing")
        if knots.size < p + 2:
            raise DomainError(f"degree {p} needs at least {p + 2} knots, got {knots.size}")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "degree", p)

    @property
    def m(self) -> int:
        """Index of the last knot."""
        return self.knots.size - 1

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        """Fully supported domain ``[t_p, t_{m-p}]``."""
        return float(self.knots[self.degree]), float(self.knots[self.m - self.degree])

    @cached_property
    def _last_span(self) -> int:
        t, p = self.knots, self.degree
        for i in range(self.n_basis - 1, p - 1, -1):
            if t[i] < t[i + 1]:
                return i
        raise DomainError("knot vector has an empty supported domain")

    def __eq__(self, other):
        return (
            isinstance(other, KnotVector)
            and self.degree == other.degree
            and np.array_equal(self.knots, other.knots)
        )

    __hash__ = None


def uniform_knots(domain: tuple[float, float], grid_size: int, degree: int) -> KnotVector:
    """Uniform grid of ``grid_size`` intervals on ``domain`` padded by ``degree`` knots per side."""
    a, b = float(domain[0]), float(domain[1])
    if not a < b:
        raise DomainError(f"invalid domain [{a}, {b}]")
    if grid_size < 1 or degree < 0:
        raise DomainError(f"need grid_size >= 1 and degree >= 0, got {grid_size}, {degree}")
    h = (b - a) / grid_size
    idx = np.arange(-degree, grid_size + degree + 1, dtype=float)
    knots = a + idx * h
    # pin the grid endpoints exactly so the supported domain is [a, b] bit-for-bit
    knots[degree] = a
    knots[degree + grid_size] = b
    return KnotVector(knots, degree)


def _degree_zero(knots: np.ndarray, j: int, t: float) -> float:
    if knots[j] <= t < knots[j + 1]:
        return 1.0
    if t == knots[-1] and knots[j] < knots[j + 1] == knots[-1]:
        return 1.0
    return 0.0


def _check_index(kv: KnotVector, i: int, p: int):
    if not 0 <= p <= kv.degree:
        raise DomainError(f"degree {p} outside [0, {kv.degree}]")
    if not 0 <= i <= kv.m - p - 1:
        raise DomainError(f"basis index {i} outside [0, {kv.m - p - 1}] for degree {p}")


def bspline_basis(kv: KnotVector, i: int, p: int, t: float) -> float:
    """Value of ``B_{i,p}(t)`` on ``kv``.

    Builds the triangle of lower-degree bases bottom-up instead of recursing,
    so each ``B_{j,d}`` is evaluated once.
    """
    _check_index(kv, i, p)
    knots = kv.knots
    if t < knots[i] or t > knots[i + p + 1]:
        return 0.0
    row = [_degree_zero(knots, i + r, t) for r in range(p + 1)]
    for d in range(1, p + 1):
        for r in range(p + 1 - d):
            j = i + r
            left = knots[j + d] - knots[j]
            right = knots[j + d + 1] - knots[j + 1]
            val = 0.0
            if left != 0.0:
                val += (t - knots[j]) / left * row[r]
            if right != 0.0:
                val += (knots[j + d + 1] - t) / right * row[r + 1]
            row[r] = val
    return row[0]


def bspline_basis_derivative(kv: KnotVector, i: int, p: int, t: float) -> float:
    """First derivative of ``B_{i,p}`` at ``t`` (right-limit at knots)."""
    _check_index(kv, i, p)
    if p == 0:
        return 0.0
    knots = kv.knots
    out = 0.0
    left = knots[i + p] - knots[i]
    if left != 0.0:
        out += bspline_basis(kv, i, p - 1, t) / left
    right = knots[i + p + 1] - knots[i + 1]
    if right != 0.0:
        out -= bspline_basis(kv, i + 1, p - 1, t) / right
    return p * out


def find_span(kv: KnotVector, x: np.ndarray) -> np.ndarray:
    """Knot-span index of each (already clamped) ``x``: ``t_s <= x < t_{s+1}``."""
    span = np.searchsorted(kv.knots, x, side="right") - 1
    return np.clip(span, kv.degree, kv._last_span)


def local_basis(knots: np.ndarray, p: int, span: np.ndarray, x: np.ndarray) -> np.ndarray:
    """The ``p + 1`` non-zero degree-``p`` bases on each span, shape ``(p + 1, len(x))``.

    Row ``r`` holds ``B_{span - p + r, p}(x)``.
    """
    vals = [np.ones(x.size)]
    left = [None] + [x - knots[span + 1 - j] for j in range(1, p + 1)]
    right = [None] + [knots[span + j] - x for j in range(1, p + 1)]
    for j in range(1, p + 1):
        saved = np.zeros(x.size)
        nxt = []
        for r in range(j):
            temp = vals[r] / (right[r + 1] + left[j - r])
            nxt.append(saved + right[r + 1] * temp)
            saved = left[j - r] * temp
        nxt.append(saved)
        vals = nxt
    return np.array(vals)


def local_basis_derivative(knots: np.ndarray, p: int, span: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Derivatives of the ``p + 1`` non-zero bases, aligned with :func:`local_basis`."""
    if p == 0:
        return np.zeros((1, x.size))
    low = local_basis(knots, p - 1, span, x)
    out = np.zeros((p + 1, x.size))
    for r in range(p + 1):
        i = span - p + r
        if r >= 1:
            out[r] += low[r - 1] / (knots[i + p] - knots[i])
        if r <= p - 1:
            out[r] -= low[r] / (knots[i + p + 1] - knots[i + 1])
    return p * out


@dataclass(frozen=True)
class BasisEval:
    """Local basis data for a batch of points, reusable across splines on one grid."""

    span: np.ndarray
    values: np.ndarray  # (p + 1, npoints), see local_basis
    derivatives: np.ndarray | None
    inside: np.ndarray  # False where the input was clamped onto the domain boundary


def evaluate_basis(kv: KnotVector, x: ArrayLike, derivatives: bool = False) -> BasisEval:
    x = np.asarray(x, dtype=float).ravel()
    lo, hi = kv.domain
    inside = (x >= lo) & (x <= hi)
    xc = np.clip(x, lo, hi)
    span = find_span(kv, xc)
    values = local_basis(kv.knots, kv.degree, span, xc)
    derivs = local_basis_derivative(kv.knots, kv.degree, span, xc) if derivatives else None
    return BasisEval(span, values, derivs, inside)


def combine(coefficients: np.ndarray, basis: BasisEval, degree: int, which: str = "values") -> np.ndarray:
    """Sum ``alpha_{span-p+r} * basis[:, r]`` over ``r`` in ascending order.

    ``coefficients`` may carry leading batch axes (e.g. one row per edge); the
    result then has shape ``coefficients.shape[:-1] + (npoints,)``.
    """
    table = basis.values if which == "values" else basis.derivatives
    out = None
    for r in range(degree + 1):
        term = coefficients[..., basis.span - degree + r] * table[r]
        out = term if out is None else out + term
    return out


@dataclass(frozen=True, eq=False)
class Spline1D:
    knots: KnotVector
    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).ravel()
        if coef.size != self.knots.n_basis:
            raise DomainError(
                f"expected {self.knots.n_basis} coefficients for this knot vector, got {coef.size}"
            )
        self.knots._last_span  # noqa: B018 - validates non-empty domain
        object.__setattr__(self, "coefficients", coef)

    @property
    def degree(self) -> int:
        return self.knots.degree

    def __call__(self, x: ArrayLike) -> np.ndarray:
        basis = evaluate_basis(self.knots, x)
        return combine(self.coefficients, basis, self.degree)

    def derivative(self, x: ArrayLike) -> np.ndarray:
        """d/dx of the clamped spline: zero where ``x`` lies outside the domain."""
        basis = evaluate_basis(self.knots, x, derivatives=True)
        return np.where(basis.inside, combine(self.coefficients, basis, self.degree, "derivatives"), 0.0)


def spline_eval(s: Spline1D, x: float) -> float:
    """Evaluate ``s`` at a scalar, clamping ``x`` into the supported domain."""
    return float(s(np.array([x]))[0])


def design_matrix(kv: KnotVector, x: ArrayLike) -> np.ndarray:
    """Dense collocation matrix ``A[j, i] = B_{i,p}(x_j)``."""
    basis = evaluate_basis(kv, x)
    n = np.asarray(x).size
    a = np.zeros((n, kv.n_basis))
    rows = np.arange(n)
    for r in range(kv.degree + 1):
        a[rows, basis.span - kv.degree + r] = basis.values[r]
    return a


def spline_fit(xs: ArrayLike, ys: ArrayLike, kv: KnotVector) -> Spline1D:
    """Least-squares spline on ``kv`` through samples ``(xs, ys)`` via the normal equations."""
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.size != y.size:
        raise DomainError(f"xs and ys differ in length: {x.size} vs {y.size}")
    if x.size < kv.n_basis:
        raise DomainError(f"underdetermined fit: {x.size} samples for {kv.n_basis} basis functions")
    lo, hi = kv.domain
    if x.size and (x.min() < lo or x.max() > hi):
        raise DomainError(f"samples must lie in the supported domain [{lo}, {hi}]")
    a = design_matrix(kv, x)
    empty = np.flatnonzero(~np.any(a != 0.0, axis=0))
    if empty.size:
        raise DomainError(f"rank-deficient fit: no sample supports basis index {int(empty[0])}")
    gram = a.T @ a
    try:
        factor = cho_factor(gram)
    except np.linalg.LinAlgError as exc:
        raise DomainError("rank-deficient fit: normal matrix is not positive definite") from exc
    coef = cho_solve(factor, a.T @ y)
    if not np.all(np.isfinite(coef)):
        raise DomainError("rank-deficient fit: solve produced non-finite coefficients")
    return Spline1D(kv, coef)


def fit_residual(s: Spline1D, xs: ArrayLike, ys: ArrayLike) -> float:
    """Root-mean-square residual of ``s`` on the samples."""
    r = s(xs) - np.asarray(ys, dtype=float).ravel()
    return math.sqrt(float(np.mean(r * r)))

"""Manifolds described by overlapping rectangular charts.

All chart fields are vectorized: they take an ``(n, d)`` array of chart
coordinates and return arrays with a leading axis of length ``n``.
Transitions return ``(images, ok)``; ``ok`` is False where the closed-form
map is singular or the image falls outside the target rectangle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import NumericDomainError, UncoveredPointError
from .grid import LOCATE_TOL, TensorGrid, classify_nodes

Field = Callable[[np.ndarray], np.ndarray]
TransitionMap = Callable[[np.ndarray], np.ndarray]

INTERIOR, PHYSICAL, ARTIFICIAL = 0, 1, 2


@dataclass(frozen=True)
class MetricSample:
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det: float


@dataclass(frozen=True, eq=False)
class Chart:
    """One coordinate patch phi_i: D_i -> M_i.

    ``physical_faces`` holds ``(axis, side)`` pairs (side 0 = low, 1 = high)
    whose image lies on the manifold boundary.  ``axis_classes`` tags each
    axis with the resolution class used by count policies ("n1"/"n2").
    ``embed`` optionally maps chart coordinates into an ambient space; it
    is used only by checks and exact-solution formulas.
    """

    id: int
    bounds: tuple[tuple[float, float], ...]
    metric: Field
    sigma: Field
    physical_faces: frozenset = frozenset()
    axis_classes: tuple[str, ...] = ()
    name: str = ""
    embed: Optional[Field] = None

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def contains(self, x, tol=LOCATE_TOL) -> np.ndarray:
        x = np.atleast_2d(x)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        eps = tol * (hi - lo)
        return np.all((x >= lo - eps) & (x <= hi + eps), axis=1)

    def clamp(self, x) -> np.ndarray:
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.clip(x, lo, hi)


@dataclass(frozen=True, eq=False)
class Atlas:
    """Charts, transition maps and problem data for -Δu + bu = f.

    ``transitions[(i, j)]`` is the raw closed-form map D_i -> R^d; missing
    pairs mean the charts never overlap.  ``f``, ``boundary`` and ``exact``
    hold one vectorized field per chart.
    """

    name: str
    charts: tuple[Chart, ...]
    transitions: Mapping[tuple[int, int], TransitionMap]
    b: float
    f: tuple[Field, ...]
    boundary: Optional[tuple[Field, ...]] = None
    exact: Optional[tuple[Field, ...]] = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("reaction coefficient b must be nonnegative")
        closed = not any(c.physical_faces for c in self.charts)
        if closed and self.b <= 0:
            raise ValueError("a manifold without boundary needs b > 0")
        if len(self.f) != len(self.charts):
            raise ValueError("one forcing field per chart is required")
        for k, c in enumerate(self.charts):
            if c.id != k:
                raise ValueError("chart ids must be 0..m-1 in order")

    @property
    def m(self) -> int:
        return len(self.charts)

    @property
    def dim(self) -> int:
        return self.charts[0].dim

    @property
    def has_boundary(self) -> bool:
        return any(c.physical_faces for c in self.charts)

    def transition(self, i: int, j: int, x) -> tuple[np.ndarray, np.ndarray]:
        """Map chart-i points into chart j; returns ``(y, ok)``.

        Images within the location tolerance of D_j are clamped onto it.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if i == j:
            return x.copy(), np.ones(len(x), dtype=bool)
        fn = self.transitions.get((i, j))
        if fn is None:
            return np.full_like(x, np.nan), np.zeros(len(x), dtype=bool)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            y = np.asarray(fn(x), dtype=np.float64)
        ok = np.all(np.isfinite(y), axis=1)
        ok[ok] = self.charts[j].contains(y[ok])
        y[ok] = self.charts[j].clamp(y[ok])
        y[~ok] = np.nan
        return y, ok

    def pou(self, i: int, x) -> tuple[np.ndarray, list[np.ndarray]]:
        """Partition-of-unity weights at chart-i points.

        Returns ``(weights, images)`` with ``weights`` of shape ``(n, m)``
        (rows sum to one) and ``images[j]`` the transition images in D_j
        (NaN where undefined).
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        raw = np.zeros((len(x), self.m))
        images = []
        for j, chart in enumerate(self.charts):
            y, ok = self.transition(i, j, x)
            if np.any(ok):
                raw[ok, j] = chart.sigma(y[ok])
            images.append(y)
        total = raw.sum(axis=1)
        bad = ~(total > 0)
        if np.any(bad):
            raise UncoveredPointError(
                f"{int(bad.sum())} point(s) of chart {i} are covered by no "
                f"partition-of-unity weight, e.g. {x[bad][:3].tolist()}",
                points=x[bad],
            )
        return raw / total[:, None], images


@dataclass(frozen=True)
class PouWeights:
    weights: tuple[tuple[int, float], ...]

    def as_dict(self) -> dict[int, float]:
        return dict(self.weights)


def transition_apply(atlas: Atlas, i: int, j: int, x):
    """Single-point transition; ``None`` stands for "undefined"."""
    y, ok = atlas.transition(i, j, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return y[0] if ok[0] else None


def pou_weights(atlas: Atlas, i: int, x) -> PouWeights:
    w, _ = atlas.pou(i, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return PouWeights(tuple((j, float(v)) for j, v in enumerate(w[0]) if v > 0))


def metric_samples(chart: Chart, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched metric: ``(g, g_inv, sqrt_det)`` with SPD validation."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    g = np.asarray(chart.metric(x), dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NumericDomainError(f"metric of chart {chart.id} is not finite")
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NumericDomainError(f"metric of chart {chart.id} is not SPD") from exc
    diag = np.diagonal(L, axis1=-2, axis2=-1)
    sqrt_det = np.prod(diag, axis=-1)
    g_inv = np.linalg.inv(g)
    g_inv = 0.5 * (g_inv + np.swapaxes(g_inv, -1, -2))
    return g, g_inv, sqrt_det


def metric_at(chart: Chart, x) -> MetricSample:
    g, g_inv, sd = metric_samples(chart, np.asarray(x, dtype=np.float64).reshape(1, -1))
    return MetricSample(g[0], g_inv[0], float(sd[0]))


def node_kinds(chart: Chart, grid: TensorGrid) -> np.ndarray:
    """Per-node INTERIOR / PHYSICAL / ARTIFICIAL classification."""
    faces = classify_nodes(grid)
    on_any = faces.any(axis=(1, 2))
    physical = np.zeros(grid.n_nodes, dtype=bool)
    for axis, side in chart.physical_faces:
        physical |= faces[:, axis, side]
    kinds = np.full(grid.n_nodes, INTERIOR, dtype=np.int8)
    kinds[on_any] = ARTIFICIAL
    kinds[physical] = PHYSICAL
    return kinds


_KIND_NAMES = {INTERIOR: "interior", PHYSICAL: "physical_boundary", ARTIFICIAL: "artificial_boundary"}


def classify_chart_node(chart: Chart, grid: TensorGrid, node: int) -> str:
    return _KIND_NAMES[int(node_kinds(chart, grid)[node])]


def chart_grid_counts(atlas: Atlas, n1: int, n2: int) -> list[tuple[int, ...]]:
    """Per-chart cell counts from the "n1"/"n2" axis classes."""
    table = {"n1": n1, "n2": n2}
    out = []
    for c in atlas.charts:
        if len(c.axis_classes) != c.dim:
            raise ValueError(f"chart {c.id} has no axis resolution classes")
        out.append(tuple(table[k] for k in c.axis_classes))
    return out


def counts_for_spacing(atlas: Atlas, h: float) -> list[tuple[int, ...]]:
    """Per-chart counts giving spacing close to ``h`` on every axis."""
    return [
        tuple(max(1, int(round((hi - lo) / h))) for lo, hi in c.bounds)
        for c in atlas.charts
    ]


def sample_chart(chart: Chart, n: int, rng: np.random.Generator, margin=0.0) -> np.ndarray:
    """Uniform random points in D_i, optionally shrunk by ``margin`` (fraction)."""
    lo = np.array([b[0] for b in chart.bounds])
    hi = np.array([b[1] for b in chart.bounds])
    pad = margin * (hi - lo)
    return rng.uniform(lo + pad, hi - pad, size=(n, chart.dim))


def finite_difference_jacobian(fn: TransitionMap, x: np.ndarray, steps: Sequence[float]) -> np.ndarray:
    """Central-difference Jacobian of a vectorized map at points ``x``."""
    x = np.atleast_2d(x)
    n, d = x.shape
    J = np.empty((n, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = steps[k]
        J[:, :, k] = (fn(x + e) - fn(x - e)) / (2 * steps[k])
    return J

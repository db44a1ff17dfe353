"""Tensor-product grids on d-rectangles and the multilinear element space.

Nodes and cells are numbered lexicographically with axis 0 varying fastest.
The ``2**d`` vertices of a cell are numbered the same way: bit ``k`` of the
vertex number selects the upper end of the cell along axis ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidDataError, OutOfDomainError

#: relative tolerance (times axis length) for clamping points onto the grid
LOCATE_TOL = 1e-12


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


class TensorGrid:
    """Partition points of a d-rectangle, one strictly increasing array per axis."""

    def __init__(self, axes: Sequence[Sequence[float]]):
        if len(axes) < 1:
            raise ValueError("a grid needs at least one axis")
        checked = []
        for k, pts in enumerate(axes):
            pts = _readonly(pts)
            if pts.ndim != 1 or pts.size < 2:
                raise ValueError(f"axis {k} needs at least 2 partition points")
            if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0):
                raise ValueError(f"axis {k} points must be finite and strictly increasing")
            checked.append(pts)
        self.axes = tuple(checked)

    def __repr__(self):
        return f"TensorGrid(counts={self.counts}, bounds={self.bounds})"

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def counts(self) -> tuple[int, ...]:
        """Cells per axis (the N_i)."""
        return tuple(len(a) - 1 for a in self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        """Nodes per axis."""
        return tuple(len(a) for a in self.axes)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        return tuple((float(a[0]), float(a[-1])) for a in self.axes)

    @property
    def max_spacing(self) -> float:
        return max(float(np.max(np.diff(a))) for a in self.axes)

    @cached_property
    def strides(self) -> np.ndarray:
        return np.concatenate([[1], np.cumprod(self.shape[:-1])]).astype(np.int64)

    @cached_property
    def vertex_offsets(self) -> np.ndarray:
        """Node-id offset of each cell vertex from the cell's lower corner."""
        bits = vertex_bits(self.dim)
        return (bits @ self.strides).astype(np.int64)

    @cached_property
    def node_index(self) -> np.ndarray:
        """(n_nodes, d) per-axis index of every node."""
        idx = np.unravel_index(np.arange(self.n_nodes), self.shape, order="F")
        return np.stack(idx, axis=1).astype(np.int64)

    @cached_property
    def nodes(self) -> np.ndarray:
        """(n_nodes, d) coordinates of every node."""
        return np.stack([a[self.node_index[:, k]] for k, a in enumerate(self.axes)], axis=1)

    @cached_property
    def cell_index(self) -> np.ndarray:
        """(n_cells, d) zero-based per-axis index of every cell."""
        idx = np.unravel_index(np.arange(self.n_cells), self.counts, order="F")
        return np.stack(idx, axis=1).astype(np.int64)

    @cached_property
    def cell_base(self) -> np.ndarray:
        """Node id of each cell's lower corner."""
        return (self.cell_index @ self.strides).astype(np.int64)

    @cached_property
    def cell_widths(self) -> np.ndarray:
        """(n_cells, d) edge lengths of every cell."""
        return np.stack(
            [np.diff(a)[self.cell_index[:, k]] for k, a in enumerate(self.axes)], axis=1
        )

    def cell_nodes(self, cells=None) -> np.ndarray:
        base = self.cell_base if cells is None else self.cell_base[cells]
        return base[:, None] + self.vertex_offsets[None, :]

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized point location.

        Returns zero-based cell indices ``(n, d)`` and local coordinates in
        ``[0, 1]``.  Interior breakpoints belong to the lower cell.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}")
        cells = np.empty(pts.shape, dtype=np.int64)
        local = np.empty(pts.shape)
        for k, a in enumerate(self.axes):
            x = pts[:, k]
            tol = LOCATE_TOL * (a[-1] - a[0])
            bad = ~((x >= a[0] - tol) & (x <= a[-1] + tol))
            if np.any(bad):
                raise OutOfDomainError(
                    f"point(s) outside axis {k} range [{a[0]}, {a[-1]}]: {pts[bad][:3]}"
                )
            x = np.clip(x, a[0], a[-1])
            c = np.clip(np.searchsorted(a, x, side="left") - 1, 0, len(a) - 2)
            cells[:, k] = c
            local[:, k] = np.clip((x - a[c]) / (a[c + 1] - a[c]), 0.0, 1.0)
        return cells, local


@dataclass(frozen=True)
class CellLocation:
    cell: tuple[int, ...]  # one-based, 1 <= t_i <= N_i
    local: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class FEFunction:
    """A multilinear finite element function: one DOF per grid node."""

    grid: TensorGrid
    dofs: np.ndarray

    def __post_init__(self):
        dofs = _readonly(self.dofs)
        if dofs.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"dofs length {dofs.shape} does not match {self.grid.n_nodes} nodes"
            )
        object.__setattr__(self, "dofs", dofs)

    def __call__(self, points):
        return evaluate(self, points)


def build_uniform_grid(bounds, counts) -> TensorGrid:
    if len(bounds) != len(counts):
        raise ValueError("bounds and counts must have the same length")
    axes = []
    for (lo, hi), n in zip(bounds, counts):
        if int(n) != n or n < 1:
            raise ValueError(f"cell count must be a positive integer, got {n}")
        if not lo < hi:
            raise ValueError(f"degenerate interval [{lo}, {hi}]")
        axes.append(np.linspace(lo, hi, int(n) + 1))
    return TensorGrid(axes)


def vertex_bits(d: int) -> np.ndarray:
    """(2**d, d) 0/1 table; row a holds the bits of vertex a."""
    a = np.arange(2**d)
    return ((a[:, None] >> np.arange(d)[None, :]) & 1).astype(np.int64)


def locate_cell(grid: TensorGrid, x) -> CellLocation:
    cells, local = grid.locate(np.asarray(x, dtype=np.float64).reshape(1, -1))
    return CellLocation(tuple(int(c) + 1 for c in cells[0]), tuple(float(t) for t in local[0]))


def shape_values(local) -> np.ndarray:
    """Multilinear basis weights at reference points.

    ``local`` is ``(d,)`` or ``(n, d)``; the result has a trailing axis of
    length ``2**d`` ordered like the cell vertices.
    """
    xi = np.clip(np.asarray(local, dtype=np.float64), 0.0, 1.0)
    d = xi.shape[-1]
    bits = vertex_bits(d)
    # factor[..., a, k] = xi_k if bit else 1 - xi_k
    f = np.where(bits == 1, xi[..., None, :], 1.0 - xi[..., None, :])
    return np.prod(f, axis=-1)


def shape_gradients(local) -> np.ndarray:
    """Reference-coordinate gradients, shape ``(..., 2**d, d)``."""
    xi = np.clip(np.asarray(local, dtype=np.float64), 0.0, 1.0)
    d = xi.shape[-1]
    bits = vertex_bits(d)
    f = np.where(bits == 1, xi[..., None, :], 1.0 - xi[..., None, :])
    df = np.where(bits == 1, 1.0, -1.0)
    out = np.empty(f.shape)
    for m in range(d):
        others = np.delete(f, m, axis=-1)
        out[..., m] = df[:, m] * np.prod(others, axis=-1)
    return out


def interpolation_matrix(grid: TensorGrid, points) -> sp.csr_matrix:
    """Sparse (n_points, n_nodes) matrix evaluating FE functions at points."""
    cells, local = grid.locate(points)
    n = cells.shape[0]
    nb = 2**grid.dim
    cols = (cells @ grid.strides)[:, None] + grid.vertex_offsets[None, :]
    vals = shape_values(local)
    rows = np.repeat(np.arange(n), nb)
    return sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, grid.n_nodes))


def evaluate(f: FEFunction, points) -> np.ndarray:
    cells, local = f.grid.locate(points)
    cols = (cells @ f.grid.strides)[:, None] + f.grid.vertex_offsets[None, :]
    return np.einsum("na,na->n", shape_values(local), f.dofs[cols])


def eval_fe(f: FEFunction, x) -> float:
    return float(evaluate(f, np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def interpolate(grid: TensorGrid, g: Callable[[np.ndarray], np.ndarray]) -> FEFunction:
    """Nodal interpolant of a vectorized field ``g((n, d)) -> (n,)``."""
    vals = np.asarray(g(grid.nodes), dtype=np.float64).reshape(-1)
    if vals.shape != (grid.n_nodes,):
        raise InvalidDataError("field returned the wrong number of values")
    if not np.all(np.isfinite(vals)):
        raise InvalidDataError("field is NaN or infinite at some grid node")
    return FEFunction(grid, vals)


def classify_nodes(grid: TensorGrid) -> np.ndarray:
    """Boolean ``(n_nodes, d, 2)``: ``[node, axis, side]`` is set on that face.

    ``side`` 0 is the low face, 1 the high face.  A node is interior when no
    entry is set.
    """
    idx = grid.node_index
    last = np.array(grid.counts)
    return np.stack([idx == 0, idx == last[None, :]], axis=2)


def interior_mask(grid: TensorGrid) -> np.ndarray:
    return ~classify_nodes(grid).any(axis=(1, 2))


# -- text dump -------------------------------------------------------------

def dump_fefunction(f: FEFunction, path) -> None:
    g = f.grid
    with open(path, "w") as fh:
        fh.write(f"ddm-fef v1 d={g.dim} counts={','.join(map(str, g.counts))}\n")
        for a in g.axes:
            fh.write(" ".join(f"{v:.17g}" for v in a) + "\n")
        fh.writelines(f"{v:.17g}\n" for v in f.dofs)


def load_fefunction(path) -> FEFunction:
    with open(path) as fh:
        header = fh.readline().split()
        if header[:2] != ["ddm-fef", "v1"]:
            raise InvalidDataError(f"{path}: not a ddm-fef v1 file")
        fields = dict(item.split("=", 1) for item in header[2:])
        d = int(fields["d"])
        counts = [int(c) for c in fields["counts"].split(",")]
        axes = [np.array(fh.readline().split(), dtype=np.float64) for _ in range(d)]
        if [len(a) - 1 for a in axes] != counts:
            raise InvalidDataError(f"{path}: axis lengths disagree with header counts")
        dofs = np.array(fh.read().split(), dtype=np.float64)
    return FEFunction(TensorGrid(axes), dofs)

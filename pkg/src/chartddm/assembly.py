"""Quadrature and sparse assembly of the chart bilinear forms.

Cell matrices are accumulated into a structured ``(n_nodes, 3**d)`` stencil
array and only then converted to CSR.  Each cell matrix is symmetrized from
its upper triangle before the scatter, so (i, j) and (j, i) receive the same
values in the same order and the result is exactly symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ._backend import kernels
from .atlas import Chart, metric_samples
from .errors import InvalidDataError
from .grid import TensorGrid, shape_gradients, shape_values, vertex_bits

CELL_CHUNK = 4096


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, d) in [0, 1]^d
    weights: np.ndarray  # (nq,), sum to 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@lru_cache(maxsize=None)
def gauss_rule(d: int, points_per_axis: int = 2) -> QuadratureRule:
    """Tensor Gauss-Legendre rule on [0, 1]^d, axis 0 varying fastest."""
    if points_per_axis < 2:
        raise ValueError("need at least 2 points per axis")
    x, w = np.polynomial.legendre.leggauss(points_per_axis)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    idx = np.stack(
        np.unravel_index(np.arange(points_per_axis**d), (points_per_axis,) * d, order="F"),
        axis=1,
    )
    pts = x[idx]
    wts = np.prod(w[idx], axis=1)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts)


@lru_cache(maxsize=None)
def _stencil_tables(d: int):
    """Vertex-pair -> stencil slot table, and each slot's axis offsets."""
    bits = vertex_bits(d)
    delta = bits[None, :, :] - bits[:, None, :]  # [a, b, k] = bit_b - bit_a
    pow3 = 3 ** np.arange(d)
    pair_slot = ((delta + 1) @ pow3).astype(np.int64)
    slot_offsets = np.stack(
        np.unravel_index(np.arange(3**d), (3,) * d, order="F"), axis=1
    ) - 1
    return pair_slot, slot_offsets


def _symmetrize_upper(local: np.ndarray) -> np.ndarray:
    nb = local.shape[-1]
    lo = np.tril_indices(nb, -1)
    local[:, lo[0], lo[1]] = local[:, lo[1], lo[0]]
    return local


COEFFICIENT_MODES = ("center", "gauss")


def _cell_geometry(grid: TensorGrid, cells: np.ndarray):
    lo = np.stack([a[grid.cell_index[cells, k]] for k, a in enumerate(grid.axes)], axis=1)
    return lo, grid.cell_widths[cells]


def cell_sample_points(grid, cells, rule, coefficients):
    """Points where coefficients are sampled: ``(nc, 1, d)`` or ``(nc, nq, d)``."""
    lo, h = _cell_geometry(grid, cells)
    if coefficients == "center":
        return (lo + 0.5 * h)[:, None, :], h
    if coefficients == "gauss":
        return lo[:, None, :] + h[:, None, :] * rule.points[None, :, :], h
    raise ValueError(f"coefficients must be one of {COEFFICIENT_MODES}, got {coefficients!r}")


def _local_matrices(chart, grid, cells, rule, euclidean, coefficients):
    x, h = cell_sample_points(grid, cells, rule, coefficients)
    nc, ns, d = x.shape
    if euclidean:
        g_inv = np.broadcast_to(np.eye(d), (nc * ns, d, d))
        sqrt_det = np.ones(nc * ns)
    else:
        _, g_inv, sqrt_det = metric_samples(chart, x.reshape(-1, d))
    nq = len(rule.weights)
    omega = (rule.weights[None, :] * np.prod(h, axis=1)[:, None]) * sqrt_det.reshape(nc, ns)
    g_inv = np.broadcast_to(g_inv.reshape(nc, ns, d, d), (nc, nq, d, d))

    phi = shape_values(rule.points)  # (nq, nb)
    dphi = shape_gradients(rule.points)  # (nq, nb, d)
    nb = phi.shape[1]
    grad = dphi[None, :, :, :] / h[:, None, None, :]  # (nc, nq, nb, d)
    weighted = grad @ (omega[:, :, None, None] * g_inv)  # (nc, nq, nb, d)
    P = weighted.transpose(0, 2, 1, 3).reshape(nc, nb, nq * d)
    G = grad.transpose(0, 2, 1, 3).reshape(nc, nb, nq * d)
    K = _symmetrize_upper(P @ G.transpose(0, 2, 1))

    pp = (phi[:, :, None] * phi[:, None, :]).reshape(nq, nb * nb)
    M = _symmetrize_upper((omega @ pp).reshape(nc, nb, nb))
    return np.ascontiguousarray(K), np.ascontiguousarray(M)


def stencil_to_csr(grid: TensorGrid, stencil: np.ndarray) -> sp.csr_matrix:
    _, slot_offsets = _stencil_tables(grid.dim)
    lin = slot_offsets @ grid.strides
    order = np.argsort(lin, kind="stable")
    idx = grid.node_index
    last = np.array(grid.counts)
    nbr = idx[:, None, :] + slot_offsets[order][None, :, :]
    valid = np.all((nbr >= 0) & (nbr <= last), axis=2)
    cols = np.arange(grid.n_nodes)[:, None] + lin[order][None, :]
    indptr = np.concatenate([[0], np.cumsum(valid.sum(axis=1))]).astype(np.int32)
    A = sp.csr_matrix(
        (stencil[:, order][valid], cols[valid].astype(np.int32), indptr),
        shape=(grid.n_nodes, grid.n_nodes),
    )
    return as_operator(A)


def as_operator(A) -> sp.csr_matrix:
    """CSR with int32 indices, sorted, as the kernels expect."""
    A = sp.csr_matrix(A)
    A.sort_indices()
    A.indptr = A.indptr.astype(np.int32, copy=False)
    A.indices = A.indices.astype(np.int32, copy=False)
    A.data = np.ascontiguousarray(A.data, dtype=np.float64)
    return A


def assemble_stencils(chart: Chart, grid: TensorGrid, rule: QuadratureRule | None = None,
                      euclidean: bool = False, coefficients: str = "center"):
    """Stiffness and mass stencils ``(S_K, S_M)``, each ``(n_nodes, 3**d)``.

    ``coefficients="center"`` freezes g^{-1} sqrt(G) at each cell centre and
    integrates the basis products exactly; ``"gauss"`` samples the metric
    at every quadrature point.
    """
    d = grid.dim
    rule = rule or gauss_rule(d)
    pair_slot, _ = _stencil_tables(d)
    SK = np.zeros((grid.n_nodes, 3**d))
    SM = np.zeros((grid.n_nodes, 3**d))
    offsets = grid.vertex_offsets
    for start in range(0, grid.n_cells, CELL_CHUNK):
        cells = np.arange(start, min(start + CELL_CHUNK, grid.n_cells))
        K, M = _local_matrices(chart, grid, cells, rule, euclidean, coefficients)
        base = grid.cell_base[cells]
        kernels.scatter_stencil(SK, K, base, offsets, pair_slot)
        kernels.scatter_stencil(SM, M, base, offsets, pair_slot)
    return SK, SM


def assemble_forms(chart: Chart, grid: TensorGrid, rule: QuadratureRule | None = None,
                   euclidean: bool = False, coefficients: str = "center"):
    """Stiffness K (g^-1 weighted gradients) and mass M, both with sqrt(G)."""
    SK, SM = assemble_stencils(chart, grid, rule, euclidean, coefficients)
    return stencil_to_csr(grid, SK), stencil_to_csr(grid, SM)


def assemble_operator(chart: Chart, grid: TensorGrid, b: float,
                      rule: QuadratureRule | None = None, coefficients: str = "center") -> sp.csr_matrix:
    """Matrix of a_i(w, v) = ∫ (g^{ab} ∂w ∂v + b w v) sqrt(G) on the chart grid."""
    SK, SM = assemble_stencils(chart, grid, rule, coefficients=coefficients)
    return stencil_to_csr(grid, SK + b * SM)


def assemble_load(chart: Chart, grid: TensorGrid, f_at, rule: QuadratureRule | None = None,
                  coefficients: str = "center") -> np.ndarray:
    """Load vector (f, phi_xi)_i for every node; f sqrt(G) sampled like the operator."""
    d = grid.dim
    rule = rule or gauss_rule(d)
    phi = shape_values(rule.points)
    F = np.zeros(grid.n_nodes)
    offsets = grid.vertex_offsets
    for start in range(0, grid.n_cells, CELL_CHUNK):
        cells = np.arange(start, min(start + CELL_CHUNK, grid.n_cells))
        x, h = cell_sample_points(grid, cells, rule, coefficients)
        nc, ns, _ = x.shape
        flat = x.reshape(-1, d)
        fx = np.asarray(f_at(flat), dtype=np.float64).reshape(nc, ns)
        if not np.all(np.isfinite(fx)):
            raise InvalidDataError(f"forcing is not finite on chart {chart.id}")
        _, _, sqrt_det = metric_samples(chart, flat)
        coef = fx * sqrt_det.reshape(nc, ns)
        omega = rule.weights[None, :] * np.prod(h, axis=1)[:, None] * coef
        vals = omega @ phi  # (nc, nb)
        base = grid.cell_base[cells]
        for a, off in enumerate(offsets):
            F[base + off] += vals[:, a]
    return F


@dataclass(frozen=True, eq=False)
class DirichletSystem:
    """Interior block A_ii and boundary coupling A_ib of a full operator."""

    interior: np.ndarray  # node ids of the unknowns, increasing
    boundary: np.ndarray  # node ids of prescribed values, increasing
    interior_index: np.ndarray  # node id -> equation id, -1 on boundary
    A_ii: sp.csr_matrix
    A_ib: sp.csr_matrix

    def coupling(self, g_b) -> np.ndarray:
        return -(self.A_ib @ np.asarray(g_b, dtype=np.float64))

    def rhs(self, load, g_b) -> np.ndarray:
        return load[self.interior] + self.coupling(g_b)


def build_dirichlet_system(A: sp.csr_matrix, grid: TensorGrid, boundary_nodes) -> DirichletSystem:
    n = grid.n_nodes
    is_bnd = np.zeros(n, dtype=bool)
    is_bnd[np.asarray(list(boundary_nodes) if isinstance(boundary_nodes, (set, frozenset))
                      else boundary_nodes, dtype=np.int64)] = True
    interior = np.flatnonzero(~is_bnd)
    boundary = np.flatnonzero(is_bnd)
    if interior.size == 0:
        raise ValueError("Dirichlet system has no interior unknowns")
    index = np.full(n, -1, dtype=np.int64)
    index[interior] = np.arange(interior.size)
    rows = A[interior]
    return DirichletSystem(
        interior=interior,
        boundary=boundary,
        interior_index=index,
        A_ii=as_operator(rows[:, interior]),
        A_ib=as_operator(rows[:, boundary]),
    )


def dump_matrix(A: sp.spmatrix, path) -> None:
    """Write ``row col value`` lines (0-based), sorted by row then column."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        for r, c, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")

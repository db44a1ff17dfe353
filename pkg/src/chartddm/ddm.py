"""Parallel overlapping Schwarz iteration over chart subproblems.

Each outer step reads a frozen snapshot of every chart's previous iterate,
fills artificial-boundary DOFs by partition-of-unity weighted interpolation
from the neighbouring charts, and re-solves every chart's interior system
with CG warm-started from its previous interior values.  The iteration
stops at the first step where every chart's CG needs zero iterations.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .assembly import (
    COEFFICIENT_MODES,
    DirichletSystem,
    as_operator,
    assemble_load,
    assemble_stencils,
    build_dirichlet_system,
    gauss_rule,
    stencil_to_csr,
)
from .atlas import ARTIFICIAL, INTERIOR, PHYSICAL, Atlas, Chart, chart_grid_counts, node_kinds
from .errors import DDMNonConvergence, IterationFailure, UncoveredPointError
from .grid import FEFunction, TensorGrid, build_uniform_grid, interpolation_matrix
from .solver import CGReport, cg_solve

log = logging.getLogger(__name__)


@dataclass
class DDMConfig:
    atlas: Atlas
    counts: Sequence[Sequence[int]]
    cg_tol: float = 1e-8
    max_outer: int = 500
    quad_points: int = 2
    workers: int = 1
    jacobi: bool = False
    max_cg_iter: Optional[int] = None
    coefficients: str = "center"

    def __post_init__(self):
        if len(self.counts) != self.atlas.m:
            raise ValueError("need one count tuple per chart")
        for c, chart in zip(self.counts, self.atlas.charts):
            if len(c) != chart.dim or any(int(n) != n or n < 1 for n in c):
                raise ValueError(f"invalid cell counts {c} for chart {chart.id}")
        if not self.cg_tol > 0:
            raise ValueError("cg_tol must be positive")
        if self.max_outer < 1 or self.workers < 1:
            raise ValueError("max_outer and workers must be at least 1")
        if self.coefficients not in COEFFICIENT_MODES:
            raise ValueError(f"coefficients must be one of {COEFFICIENT_MODES}")


def n1_from_n2(n2: int, ratio: float = 0.4) -> int:
    return max(1, int(round(ratio * n2)))


def sweep_config(atlas: Atlas, n2: int, n1_ratio: float = 0.4, **kwargs) -> DDMConfig:
    """Config using N1 = ratio * N2 on [-s,s] / [delta,1] axes, N2 on [-r,r] axes."""
    counts = chart_grid_counts(atlas, n1_from_n2(n2, n1_ratio), n2)
    return DDMConfig(atlas=atlas, counts=counts, **kwargs)


@dataclass(frozen=True, eq=False)
class Subproblem:
    chart: Chart
    grid: TensorGrid
    operator: sp.csr_matrix  # full a_i on all nodes
    stiffness_stencil: np.ndarray
    mass_stencil: np.ndarray
    system: DirichletSystem
    load: np.ndarray
    kinds: np.ndarray
    physical_values: np.ndarray  # one value per PHYSICAL node, in node order
    offset: int  # start of this chart in the concatenated DOF vector
    transfer: Optional[sp.csr_matrix] = None  # (n_artificial, total DOFs)

    @property
    def artificial(self) -> np.ndarray:
        return np.flatnonzero(self.kinds == ARTIFICIAL)

    @property
    def physical(self) -> np.ndarray:
        return np.flatnonzero(self.kinds == PHYSICAL)


@dataclass(frozen=True, eq=False)
class DDMState:
    n: int
    solutions: tuple[FEFunction, ...]
    inner_iterations: tuple[int, ...] = ()
    residuals: tuple[float, ...] = ()

    def stacked(self) -> np.ndarray:
        return np.concatenate([s.dofs for s in self.solutions])


@dataclass
class DDMResult:
    state: DDMState
    n0: int
    subproblems: list[Subproblem]
    history: list[dict] = field(default_factory=list)

    @property
    def total_cg_iterations(self) -> int:
        return sum(sum(h["cg_iters"]) for h in self.history)


def build_subproblems(config: DDMConfig) -> list[Subproblem]:
    atlas = config.atlas
    rule = gauss_rule(atlas.dim, config.quad_points)
    subs = []
    offset = 0
    for chart, counts in zip(atlas.charts, config.counts):
        grid = build_uniform_grid(chart.bounds, counts)
        SK, SM = assemble_stencils(chart, grid, rule, coefficients=config.coefficients)
        A = stencil_to_csr(grid, SK + atlas.b * SM)
        kinds = node_kinds(chart, grid)
        physical = np.flatnonzero(kinds == PHYSICAL)
        if physical.size:
            if atlas.boundary is None:
                raise ValueError(f"chart {chart.id} has physical faces but no boundary datum")
            pvals = np.asarray(atlas.boundary[chart.id](grid.nodes[physical]), dtype=np.float64)
        else:
            pvals = np.zeros(0)
        system = build_dirichlet_system(A, grid, np.flatnonzero(kinds != INTERIOR))
        load = assemble_load(chart, grid, atlas.f[chart.id], rule, config.coefficients)
        subs.append(Subproblem(chart, grid, A, SK, SM, system, load, kinds, pvals, offset))
        offset += grid.n_nodes
    return [_with_transfer(atlas, s, subs, offset) for s in subs]


def _with_transfer(atlas: Atlas, sub: Subproblem, subs: list[Subproblem], total: int) -> Subproblem:
    """Cache the boundary-transfer geometry as one sparse matrix per chart."""
    art = sub.artificial
    if art.size == 0:
        T = sp.csr_matrix((0, total))
    else:
        pts = sub.grid.nodes[art]
        try:
            weights, images = atlas.pou(sub.chart.id, pts)
        except UncoveredPointError as exc:
            raise UncoveredPointError(
                f"artificial boundary of chart {sub.chart.id} is not covered; "
                f"chart coordinates of uncovered nodes: {exc.points[:5].tolist()}",
                points=exc.points,
            ) from exc
        blocks = []
        for j, other in enumerate(subs):
            rows = np.flatnonzero(weights[:, j] > 0)
            if rows.size == 0:
                continue
            P = interpolation_matrix(other.grid, images[j][rows]).tocoo()
            blocks.append((rows[P.row], P.col + other.offset, P.data * weights[rows[P.row], j]))
        r = np.concatenate([b[0] for b in blocks])
        c = np.concatenate([b[1] for b in blocks])
        v = np.concatenate([b[2] for b in blocks])
        T = sp.csr_matrix((v, (r, c)), shape=(art.size, total))
    return Subproblem(**{**sub.__dict__, "transfer": as_operator(T)})


def initial_state(subproblems: Sequence[Subproblem]) -> DDMState:
    """Zero everywhere except physical-boundary nodes, which carry the datum."""
    sols = []
    for s in subproblems:
        dofs = np.zeros(s.grid.n_nodes)
        dofs[s.physical] = s.physical_values
        sols.append(FEFunction(s.grid, dofs))
    return DDMState(0, tuple(sols))


def boundary_transfer(state: DDMState, subproblems: Sequence[Subproblem], i: int, node: int) -> float:
    """Partition-of-unity blend of the neighbours' previous iterates at one node."""
    sub = subproblems[i]
    row = np.searchsorted(sub.artificial, node)
    if row >= sub.artificial.size or sub.artificial[row] != node:
        raise ValueError(f"node {node} is not on the artificial boundary of chart {i}")
    return float((sub.transfer[row] @ state.stacked())[0])


def _solve_chart(sub: Subproblem, prev: FEFunction, snapshot: np.ndarray, tol: float,
                 jacobi: bool, max_iter: Optional[int]) -> tuple[FEFunction, CGReport]:
    new = np.array(prev.dofs)
    if sub.transfer.shape[0]:
        new[sub.artificial] = sub.transfer @ snapshot
    new[sub.physical] = sub.physical_values
    system = sub.system
    rhs = system.rhs(sub.load, new[system.boundary])
    x, report = cg_solve(system.A_ii, rhs, prev.dofs[system.interior], tol=tol,
                         max_iter=max_iter, jacobi=jacobi)
    if not report.converged:
        raise IterationFailure(
            f"CG did not converge on chart {sub.chart.id} "
            f"({report.iterations} iterations, residual {report.final_relative_residual:.3e})",
            chart=sub.chart.id,
            report=report,
        )
    if report.iterations == 0:
        # previous iterate already solves the new system: keep it verbatim
        return prev, report
    new[system.interior] = x
    return FEFunction(sub.grid, new), report


def outer_step(state: DDMState, subproblems: Sequence[Subproblem], cg_tol: float = 1e-8,
               workers: int = 1, order: Optional[Sequence[int]] = None, jacobi: bool = False,
               max_cg_iter: Optional[int] = None) -> tuple[DDMState, bool]:
    """One synchronous Schwarz sweep; returns the new state and the all-warm flag."""
    snapshot = state.stacked()
    snapshot.setflags(write=False)
    order = list(range(len(subproblems))) if order is None else list(order)
    if sorted(order) != list(range(len(subproblems))):
        raise ValueError("order must be a permutation of chart ids")

    def task(i):
        return _solve_chart(subproblems[i], state.solutions[i], snapshot, cg_tol, jacobi, max_cg_iter)

    if workers > 1 and len(order) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(order))) as pool:
            results = dict(zip(order, pool.map(task, order)))
    else:
        results = {i: task(i) for i in order}

    sols = tuple(results[i][0] for i in range(len(subproblems)))
    reports = [results[i][1] for i in range(len(subproblems))]
    new = DDMState(
        state.n + 1,
        sols,
        tuple(r.iterations for r in reports),
        tuple(r.final_relative_residual for r in reports),
    )
    return new, all(r.iterations == 0 for r in reports)


def run(config: DDMConfig, subproblems: Optional[list[Subproblem]] = None,
        on_step: Optional[Callable[[DDMState, dict], None]] = None) -> DDMResult:
    """Iterate outer steps until every chart warm-starts in zero CG iterations.

    ``n0`` is the index of the last step that changed the iterate; the
    returned state is that iterate.
    """
    if subproblems is None:
        subproblems = build_subproblems(config)
    state = initial_state(subproblems)
    history = []
    for _ in range(config.max_outer):
        new, all_warm = outer_step(
            state, subproblems, config.cg_tol, workers=config.workers,
            jacobi=config.jacobi, max_cg_iter=config.max_cg_iter,
        )
        change = max(float(np.max(np.abs(a.dofs - b.dofs)))
                     for a, b in zip(new.solutions, state.solutions))
        entry = {
            "n": new.n,
            "cg_iters": list(new.inner_iterations),
            "rel_residual": list(new.residuals),
            "max_change": change,
        }
        history.append(entry)
        for chart, (it, res) in enumerate(zip(new.inner_iterations, new.residuals)):
            log.info("n=%d chart=%d cg_iters=%d rel_residual=%.6e", new.n, chart, it, res)
        if on_step is not None:
            on_step(new, entry)
        if all_warm:
            return DDMResult(state, state.n, subproblems, history)
        state = new
    raise DDMNonConvergence(
        f"no warm-start fixed point within {config.max_outer} outer iterations",
        history=history,
    )


def default_workers(m: int) -> int:
    return max(1, min(os.cpu_count() or 1, m))

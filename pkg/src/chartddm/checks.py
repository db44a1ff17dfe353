"""Self-checks shared by ``chartddm verify`` and the test suites.

Each check returns plain numbers so callers can compare them against
their own thresholds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import assemble_load, assemble_operator, build_dirichlet_system
from .atlas import INTERIOR, PHYSICAL, Atlas, counts_for_spacing, finite_difference_jacobian, node_kinds
from .ddm import DDMConfig, run
from .grid import FEFunction, build_uniform_grid, evaluate, interpolate
from .manifolds import make_flat_square
from .solver import cg_solve


def _overlap_samples(atlas: Atlas, n_points: int, rng: np.random.Generator, margin: float = 0.02):
    """Random ``(i, j, x, y)`` batches with x in D_i mapping into D_j."""
    pairs = sorted(atlas.transitions)
    if not pairs:
        return []
    out, found, tries = [], 0, 0
    while found < n_points:
        tries += 1
        if tries > 1000:
            raise RuntimeError(f"could not find {n_points} overlap points on {atlas.name}")
        i, j = pairs[rng.integers(len(pairs))]
        lo = np.array([b[0] for b in atlas.charts[i].bounds])
        hi = np.array([b[1] for b in atlas.charts[i].bounds])
        pad = margin * (hi - lo)
        x = rng.uniform(lo + pad, hi - pad, size=(64, atlas.dim))
        y, ok = atlas.transition(i, j, x)
        # keep a margin inside D_j too, so finite differences stay regular
        lo_j = np.array([b[0] for b in atlas.charts[j].bounds])
        hi_j = np.array([b[1] for b in atlas.charts[j].bounds])
        pad_j = margin * (hi_j - lo_j)
        ok &= np.all((y > lo_j + pad_j) & (y < hi_j - pad_j), axis=1) if np.any(ok) else ok
        keep = np.flatnonzero(ok)[: n_points - found]
        if keep.size:
            out.append((i, j, x[keep], y[keep]))
            found += keep.size
    return out


def metric_compatibility(atlas: Atlas, n_points: int = 200, seed: int = 0) -> float:
    """Largest relative mismatch ``|g_i - J^T g_j J| / |g_i|`` over overlap points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i, j, x, y in _overlap_samples(atlas, n_points, rng):
        fn = atlas.transitions[(i, j)]
        widths = [hi - lo for lo, hi in atlas.charts[i].bounds]
        J = finite_difference_jacobian(fn, x, [1e-5 * w for w in widths])
        gi = atlas.charts[i].metric(x)
        gj = atlas.charts[j].metric(y)
        pulled = np.einsum("nak,nab,nbl->nkl", J, gj, J)
        err = np.linalg.norm(gi - pulled, axis=(1, 2)) / np.linalg.norm(gi, axis=(1, 2))
        worst = max(worst, float(err.max()))
    return worst


def transition_roundtrip(atlas: Atlas, n_points: int = 200, seed: int = 0) -> float:
    """Largest ``|tau_ji(tau_ij(x)) - x|`` over overlap points."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i, j, x, y in _overlap_samples(atlas, n_points, rng):
        back, ok = atlas.transition(j, i, y)
        if not np.all(ok):
            return float("inf")
        worst = max(worst, float(np.max(np.abs(back - x))))
    return worst


def pou_sum_error(atlas: Atlas, n_points: int = 1000, seed: int = 0) -> float:
    """Largest deviation of the partition of unity from summing to one.

    Weights are evaluated from a random chart and, where the point lies in
    a second chart, recomputed from that chart; the two must agree too.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    per_chart = np.bincount(rng.integers(atlas.m, size=n_points), minlength=atlas.m)
    for i, n in enumerate(per_chart):
        if n == 0:
            continue
        lo = np.array([b[0] for b in atlas.charts[i].bounds])
        hi = np.array([b[1] for b in atlas.charts[i].bounds])
        x = rng.uniform(lo, hi, size=(n, atlas.dim))
        w, images = atlas.pou(i, x)
        worst = max(worst, float(np.max(np.abs(w.sum(axis=1) - 1.0))))
        for k in range(atlas.m):
            if k == i:
                continue
            ok = np.all(np.isfinite(images[k]), axis=1)
            if np.any(ok):
                wk, _ = atlas.pou(k, images[k][ok])
                worst = max(worst, float(np.max(np.abs(wk - w[ok]))))
    return worst


def direct_solve(atlas: Atlas, counts, cg_tol: float = 1e-8, coefficients: str = "center") -> FEFunction:
    """One Dirichlet FEM solve on a single-chart atlas, CG from a zero guess."""
    if atlas.m != 1:
        raise ValueError("direct_solve needs a single-chart atlas")
    chart = atlas.charts[0]
    grid = build_uniform_grid(chart.bounds, counts)
    A = assemble_operator(chart, grid, atlas.b, coefficients=coefficients)
    load = assemble_load(chart, grid, atlas.f[0], coefficients=coefficients)
    kinds = node_kinds(chart, grid)
    dofs = np.zeros(grid.n_nodes)
    phys = np.flatnonzero(kinds == PHYSICAL)
    dofs[phys] = atlas.boundary[0](grid.nodes[phys])
    system = build_dirichlet_system(A, grid, np.flatnonzero(kinds != INTERIOR))
    x, _ = cg_solve(system.A_ii, system.rhs(load, dofs[system.boundary]),
                    np.zeros(system.interior.size), tol=cg_tol)
    dofs[system.interior] = x
    return FEFunction(grid, dofs)


@dataclass(frozen=True)
class OracleResult:
    h: float
    discrepancy: float  # max nodal |u_ddm - u_global|
    global_error: float  # max nodal |I_h u - u_global|
    n0: int
    conforming: bool = True  # every chart node is a global grid node
    factor: float = 3.0

    @property
    def passed(self) -> bool:
        return self.conforming and self.discrepancy <= self.factor * self.global_error

    @property
    def verdict(self) -> str:
        if not self.conforming:
            return "SKIP (chart grids do not conform to the global grid)"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        verdict = self.verdict
        return (f"oracle h={self.h:.6g} discrepancy={self.discrepancy:.3e} "
                f"bound={self.factor * self.global_error:.3e} n0={self.n0} {verdict}")


def flat_oracle(h: float, overlap: float = 0.25, b: float = 0.0, cg_tol: float = 1e-8,
                workers: int = 1) -> OracleResult:
    """Compare the two-strip DDM limit with a direct global FEM solve on [0,1]^2.

    The global system is factorized directly, so the oracle shares only the
    assembly with the DDM path.  The comparison is only meaningful when the
    chart grids are sub-grids of the global one; otherwise the result is
    flagged as non-conforming.
    """
    glob = make_flat_square(charts=1, b=b)
    chart = glob.charts[0]
    n = int(round(1.0 / h))
    grid = build_uniform_grid(chart.bounds, (n, n))
    A = assemble_operator(chart, grid, b)
    load = assemble_load(chart, grid, glob.f[0])
    kinds = node_kinds(chart, grid)
    bnd = np.flatnonzero(kinds != INTERIOR)
    system = build_dirichlet_system(A, grid, bnd)
    dofs = np.zeros(grid.n_nodes)
    dofs[bnd] = glob.boundary[0](grid.nodes[bnd])
    dofs[system.interior] = spla.spsolve(system.A_ii.tocsc(), system.rhs(load, dofs[bnd]))
    u_glob = FEFunction(grid, dofs)
    global_error = float(np.max(np.abs(interpolate(grid, glob.exact[0]).dofs - dofs)))

    atlas = make_flat_square(overlap=overlap, charts=2, b=b)
    res = run(DDMConfig(atlas, counts_for_spacing(atlas, h), cg_tol=cg_tol, workers=workers))
    disc = 0.0
    conforming = True
    for sol in res.state.solutions:
        disc = max(disc, float(np.max(np.abs(sol.dofs - evaluate(u_glob, sol.grid.nodes)))))
        for a in sol.grid.axes:
            k = a * n
            conforming &= bool(np.all(np.abs(k - np.round(k)) <= 1e-9))
    return OracleResult(h, disc, global_error, res.n0, conforming)

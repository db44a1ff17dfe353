"""Error norms of I_h u - u_h and convergence-order tables."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .assembly import CELL_CHUNK, assemble_forms, cell_sample_points, gauss_rule, stencil_to_csr
from .atlas import Atlas, metric_samples
from .errors import AnalysisUnavailable
from .grid import FEFunction, TensorGrid, evaluate, interpolate

NORMS = ("linf", "l2", "h1", "energy")
CSV_FIELDS = ("h", "linf", "linf_order", "l2", "l2_order", "h1", "h1_order",
              "energy", "energy_order", "n0")


@dataclass(frozen=True)
class ErrorReport:
    h: float
    linf: Optional[float] = None
    l2: Optional[float] = None
    h1: Optional[float] = None
    energy: Optional[float] = None
    n0: Optional[int] = None

    @property
    def available(self) -> bool:
        return self.linf is not None


def grid_scale(grids: Sequence[TensorGrid]) -> float:
    """Largest axis spacing over all chart grids."""
    return max(g.max_spacing for g in grids)


def _quadratic(A, e):
    return float(e @ (A @ e))


def error_norms(atlas: Atlas, grids: Sequence[TensorGrid], solutions: Sequence[FEFunction],
                n0: Optional[int] = None, forms=None, metric_norms: bool = False,
                coefficients: str = "center") -> ErrorReport:
    """Max-over-charts norms of the DOF-wise error ``I_h u - u_h``.

    L-infinity is nodal.  The energy norm is ``a_j(e, e)^(1/2)`` with the
    same discrete metric forms as the solve.  By default L2 and the H1
    seminorm are measured in chart coordinates (plain Lebesgue measure,
    Euclidean gradient); with ``metric_norms`` they use sqrt(G) and g^{-1}.

    ``forms`` may supply precomputed per-chart ``(K, M)`` metric matrices,
    e.g. from :func:`subproblem_forms`.
    """
    if atlas.exact is None:
        raise AnalysisUnavailable(f"atlas {atlas.name!r} carries no exact solution")
    h = grid_scale(grids)
    linf = l2 = h1 = energy = 0.0
    for j, (grid, sol) in enumerate(zip(grids, solutions)):
        chart = atlas.charts[j]
        e = interpolate(grid, atlas.exact[j]).dofs - sol.dofs
        if forms is not None:
            K, M = forms[j]
        else:
            K, M = assemble_forms(chart, grid, coefficients=coefficients)
        if metric_norms:
            Kn, Mn = K, M
        else:
            Kn, Mn = assemble_forms(chart, grid, euclidean=True)
        linf = max(linf, float(np.max(np.abs(e))))
        l2 = max(l2, math.sqrt(max(_quadratic(Mn, e), 0.0)))
        h1 = max(h1, math.sqrt(max(_quadratic(Kn, e), 0.0)))
        energy = max(energy, math.sqrt(max(_quadratic(K, e) + atlas.b * _quadratic(M, e), 0.0)))
    return ErrorReport(h, linf, l2, h1, energy, n0)


def l2_error(atlas: Atlas, j: int, sol: FEFunction, points_per_axis: int = 3,
             metric: bool = False) -> float:
    """Quadrature L2 norm of ``u - u_h`` on chart j (not the interpolant error).

    Unlike the nodal error ``I_h u - u_h``, which can superconverge on
    uniform grids, this is the textbook finite-element error.
    """
    if atlas.exact is None:
        raise AnalysisUnavailable(f"atlas {atlas.name!r} carries no exact solution")
    grid = sol.grid
    rule = gauss_rule(grid.dim, points_per_axis)
    total = 0.0
    for start in range(0, grid.n_cells, CELL_CHUNK):
        cells = np.arange(start, min(start + CELL_CHUNK, grid.n_cells))
        x, h = cell_sample_points(grid, cells, rule, "gauss")
        flat = x.reshape(-1, grid.dim)
        e2 = (evaluate(sol, flat) - atlas.exact[j](flat)) ** 2
        if metric:
            e2 = e2 * metric_samples(atlas.charts[j], flat)[2]
        w = rule.weights[None, :] * np.prod(h, axis=1)[:, None]
        total += float(np.sum(e2.reshape(w.shape) * w))
    return math.sqrt(total)


def result_errors(atlas: Atlas, result) -> ErrorReport:
    """Error report of a finished DDM run, reusing its assembled forms."""
    subs = result.subproblems
    return error_norms(atlas, [s.grid for s in subs], result.state.solutions, result.n0,
                       forms=subproblem_forms(subs))


def subproblem_forms(subproblems):
    return [(stencil_to_csr(s.grid, s.stiffness_stencil), stencil_to_csr(s.grid, s.mass_stencil))
            for s in subproblems]


def convergence_orders(reports: Sequence[ErrorReport]) -> list[dict]:
    """Observed order between consecutive rows, per norm (None for the first row)."""
    out = []
    for k, rep in enumerate(reports):
        row = {}
        for name in NORMS:
            if k == 0:
                row[name] = None
                continue
            prev = reports[k - 1]
            ec, ef = getattr(prev, name), getattr(rep, name)
            if ec is None or ef is None or ec <= 0 or ef <= 0 or prev.h == rep.h:
                row[name] = None
            else:
                row[name] = math.log(ec / ef) / math.log(prev.h / rep.h)
        out.append(row)
    return out


def _fmt_err(v):
    return "n/a" if v is None else f"{v:.4g}"


def _fmt_order(v):
    return "" if v is None else f"{v:.1f}"


def table_rows(reports: Sequence[ErrorReport]) -> list[dict]:
    orders = convergence_orders(reports)
    rows = []
    for rep, order in zip(reports, orders):
        row = {"h": f"{rep.h:.6g}", "n0": "" if rep.n0 is None else str(rep.n0)}
        for name in NORMS:
            row[name] = _fmt_err(getattr(rep, name))
            row[f"{name}_order"] = _fmt_order(order[name])
        rows.append(row)
    return rows


def to_csv(reports: Sequence[ErrorReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(table_rows(reports))
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and set(rows[0]) != set(CSV_FIELDS):
        raise ValueError("CSV columns do not match the error-table schema")
    return rows


def render_table(rows: Sequence[dict], title: str = "") -> str:
    """Aligned text table: h | L∞ | L2 | H1 | energy | n0, orders beside errors."""
    headers = ["h", "||e||_Linf", "", "||e||_L2", "", "|e|_H1", "", "||e||_a", "", "n0"]
    keys = ["h", "linf", "linf_order", "l2", "l2_order", "h1", "h1_order",
            "energy", "energy_order", "n0"]
    body = [[str(r[k]) for k in keys] for r in rows]
    widths = [max(len(headers[c]), *(len(b[c]) for b in body)) if body else len(headers[c])
              for c in range(len(keys))]
    line = lambda cells: " | ".join(c.rjust(w) for c, w in zip(cells, widths))
    out = [title] if title else []
    out.append(line(headers))
    out.append("-+-".join("-" * w for w in widths))
    out.extend(line(b) for b in body)
    return "\n".join(out) + "\n"

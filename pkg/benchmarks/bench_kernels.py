"""Compare the compiled and NumPy kernel backends on the hot paths.

Times sparse mat-vec, a cold CG solve and the stencil scatter of assembly
on the largest chart operator of the B^4 atlas.  Both backends see identical
inputs, and their outputs are checked against each other.

    python benchmarks/bench_kernels.py --n2 20 --repeat 3
"""
import argparse
import time

import numpy as np

from chartddm import _backend
from chartddm.assembly import CELL_CHUNK, _local_matrices, _stencil_tables, gauss_rule
from chartddm.ddm import build_subproblems, sweep_config
from chartddm.manifolds import make_b4


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(n2):
    atlas = make_b4()
    sub = max(build_subproblems(sweep_config(atlas, n2)), key=lambda s: s.system.interior.size)
    A = sub.system.A_ii
    rhs = sub.system.rhs(sub.load, np.zeros(sub.system.boundary.size)) + 1.0
    x = np.random.default_rng(0).normal(size=A.shape[0])

    grid, chart = sub.grid, sub.chart
    cells = np.arange(min(CELL_CHUNK, grid.n_cells))
    K, _ = _local_matrices(chart, grid, cells, gauss_rule(grid.dim), False, "center")
    pair_slot, _ = _stencil_tables(grid.dim)
    base = grid.cell_base[cells]

    def spmv(k):
        return lambda: k.csr_matvec(A.indptr, A.indices, A.data, x)

    def cg(k):
        def go():
            sol = np.zeros(A.shape[0])
            it, _, _ = k.cg(A.indptr, A.indices, A.data, rhs, sol, 1e-8, 10 * A.shape[0])
            return sol, it
        return go

    def scatter(k):
        def go():
            S = np.zeros((grid.n_nodes, 3**grid.dim))
            k.scatter_stencil(S, K, base, grid.vertex_offsets, pair_slot)
            return S
        return go

    size = f"{A.shape[0]} unknowns, {A.nnz} nonzeros, {cells.size} cells"
    return size, {"spmv": spmv, "cg": cg, "scatter": scatter}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n2", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = _backend.available()
    size, bench = cases(args.n2)
    print(f"b4 largest chart, N2={args.n2}: {size}; backends: {', '.join(backends)}")
    print(f"{'kernel':<8} " + " ".join(f"{b:>12}" for b in backends) + "   speedup")
    for name, make in bench.items():
        times, outs = {}, {}
        for b, mod in backends.items():
            times[b], outs[b] = best_of(make(mod), args.repeat)
        row = f"{name:<8} " + " ".join(f"{times[b] * 1e3:10.2f}ms" for b in backends)
        if "cython" in times:
            ref, got = outs["python"], outs["cython"]
            if name == "cg":
                ref, got = ref[0], got[0]
            diff = float(np.max(np.abs(np.asarray(ref) - np.asarray(got))))
            row += f"   {times['python'] / times['cython']:6.1f}x  (max diff {diff:.1e})"
        print(row)


if __name__ == "__main__":
    main()

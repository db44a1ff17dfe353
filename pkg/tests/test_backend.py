"""The compiled kernels and their NumPy twins must agree bit for bit."""
import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_array_equal

from chartddm import _backend, _pykernels
from chartddm.assembly import _stencil_tables, as_operator, assemble_operator
from chartddm.grid import build_uniform_grid
from chartddm.manifolds import make_b4

backends = _backend.available()
needs_cython = pytest.mark.skipif("cython" not in backends, reason="compiled extension not built")


def spd_system(seed=0):
    atlas = make_b4()
    g = build_uniform_grid(atlas.charts[1].bounds, [3, 4, 4, 4])
    A = assemble_operator(atlas.charts[1], g, 1.0)
    rng = np.random.default_rng(seed)
    return A, rng.normal(size=A.shape[0])


def test_python_backend_always_available():
    assert backends["python"] is _pykernels
    assert _backend.name in backends


@needs_cython
def test_matvec_and_dot_agree():
    A, x = spd_system()
    cy = backends["cython"]
    assert_array_equal(cy.csr_matvec(A.indptr, A.indices, A.data, x),
                       _pykernels.csr_matvec(A.indptr, A.indices, A.data, x))
    y = np.random.default_rng(3).normal(size=x.size)
    assert cy.dot(x, y) == _pykernels.dot(x, y)


@needs_cython
@pytest.mark.parametrize("jacobi", [False, True])
def test_cg_agrees(jacobi):
    A, b = spd_system(1)
    dinv = 1.0 / A.diagonal() if jacobi else None
    out = {}
    for name in ("cython", "python"):
        x = np.zeros_like(b)
        it, rel, status = backends[name].cg(A.indptr, A.indices, A.data, b, x, 1e-10, 10000, dinv)
        out[name] = (x, it, rel, status)
    assert_array_equal(out["cython"][0], out["python"][0])
    assert out["cython"][1:] == out["python"][1:]
    assert out["cython"][3] == 0


@needs_cython
def test_scatter_agrees():
    pair_slot, _ = _stencil_tables(2)
    g = build_uniform_grid([(0, 1)] * 2, [5, 4])
    local = np.random.default_rng(2).normal(size=(g.n_cells, 4, 4))
    res = {}
    for name in ("cython", "python"):
        S = np.zeros((g.n_nodes, 9))
        backends[name].scatter_stencil(S, local, g.cell_base, g.vertex_offsets, pair_slot)
        res[name] = S
    assert_array_equal(res["cython"], res["python"])


def test_backend_selection_by_environment(monkeypatch):
    import importlib

    monkeypatch.setenv("CHARTDDM_BACKEND", "python")
    mod = importlib.reload(_backend)
    try:
        assert mod.name == "python"
        monkeypatch.setenv("CHARTDDM_BACKEND", "fortran")
        with pytest.raises(ImportError):
            importlib.reload(_backend)
    finally:
        monkeypatch.delenv("CHARTDDM_BACKEND")
        importlib.reload(_backend)


def test_kernels_accept_operator_from_any_sparse_format():
    A = as_operator(sp.random(20, 20, density=0.2, random_state=1).tocoo())
    x = np.ones(20)
    assert_array_equal(_pykernels.csr_matvec(A.indptr, A.indices, A.data, x), A @ x)


def test_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path

    script = Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"
    runpy.run_path(str(script), run_name="bench")["main"](["--n2", "4", "--repeat", "1"])
    out = capsys.readouterr().out
    assert "spmv" in out and "cg" in out and "scatter" in out

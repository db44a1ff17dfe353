"""Randomized property checks."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chartddm.assembly import assemble_operator
from chartddm.atlas import counts_for_spacing
from chartddm.ddm import DDMConfig, build_subproblems, initial_state, outer_step
from chartddm.grid import TensorGrid, build_uniform_grid, evaluate, interpolate, shape_values
from chartddm.manifolds import make_b2xs2, make_b4, make_cp2, make_flat_square
from chartddm.solver import cg_solve

unit = st.floats(0.0, 1.0, allow_nan=False)


@given(st.integers(1, 4).flatmap(lambda d: arrays(np.float64, (d,), elements=unit)))
def test_shape_functions_partition_unity(local):
    w = shape_values(local)
    assert abs(w.sum() - 1.0) <= 1e-14
    assert np.all((w >= 0) & (w <= 1))


@st.composite
def axes(draw, d):
    out = []
    for _ in range(d):
        gaps = draw(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=5))
        start = draw(st.floats(-2, 2))
        out.append(start + np.concatenate([[0.0], np.cumsum(gaps)]))
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3).flatmap(axes), st.lists(st.floats(-3, 3), min_size=8, max_size=8), st.data())
def test_multilinear_reproduction(ax, coeffs, data):
    g = TensorGrid(ax)
    d = g.dim

    def p(x):
        val = coeffs[0] + sum(coeffs[1 + k] * x[:, k] for k in range(d))
        return val + coeffs[7] * np.prod(x, axis=1)

    lo = np.array([a[0] for a in ax])
    hi = np.array([a[-1] for a in ax])
    t = np.array(data.draw(st.lists(arrays(np.float64, (d,), elements=unit), min_size=1, max_size=10)))
    pts = lo + t * (hi - lo)
    scale = 1 + np.max(np.abs(p(pts)))
    assert np.max(np.abs(interpolate(g, p)(pts) - p(pts))) <= 1e-12 * scale * 10


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3).flatmap(axes), st.data())
def test_locate_reconstructs_point(ax, data):
    g = TensorGrid(ax)
    t = np.array(data.draw(arrays(np.float64, (g.dim,), elements=unit)))
    lo = np.array([a[0] for a in ax])
    hi = np.array([a[-1] for a in ax])
    x = lo + t * (hi - lo)
    cells, local = g.locate(x)
    back = np.array([a[c] + s * (a[c + 1] - a[c]) for a, c, s in zip(ax, cells[0], local[0])])
    assert np.all(np.abs(back - x) <= 1e-13 * np.maximum(1.0, np.abs(x)))


ATLASES = {"b4": make_b4(), "b2xs2": make_b2xs2(), "cp2": make_cp2(), "flat": make_flat_square()}


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(sorted(ATLASES)), st.data())
def test_transition_roundtrip(name, data):
    atlas = ATLASES[name]
    i, j = data.draw(st.sampled_from(sorted(atlas.transitions)))
    lo = np.array([b[0] for b in atlas.charts[i].bounds])
    hi = np.array([b[1] for b in atlas.charts[i].bounds])
    t = data.draw(arrays(np.float64, (atlas.dim,), elements=unit))
    x = (lo + t * (hi - lo))[None]
    y, ok = atlas.transition(i, j, x)
    if ok[0]:
        back, ok2 = atlas.transition(j, i, y)
        if ok2[0]:
            assert np.max(np.abs(back - x)) <= 1e-10 * max(1.0, np.max(np.abs(x)))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(sorted(ATLASES)), st.data())
def test_pou_sums_to_one(name, data):
    atlas = ATLASES[name]
    i = data.draw(st.integers(0, atlas.m - 1))
    lo = np.array([b[0] for b in atlas.charts[i].bounds])
    hi = np.array([b[1] for b in atlas.charts[i].bounds])
    t = data.draw(arrays(np.float64, (atlas.dim,), elements=unit))
    w, _ = atlas.pou(i, (lo + t * (hi - lo))[None])
    assert np.all(w >= 0) and abs(w.sum() - 1.0) <= 1e-10


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["b4", "b2xs2"]), st.integers(0, 2), st.integers(2, 4), st.floats(0, 3))
def test_assembled_matrix_symmetric(name, chart, n, b):
    atlas = ATLASES[name]
    c = atlas.charts[chart]
    g = build_uniform_grid(c.bounds, [n] * c.dim)
    A = assemble_operator(c, g, b)
    diff = abs(A - A.T).max()
    assert diff <= 1e-12 * abs(A).max()


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=3))
def test_flat_interior_row_sums(counts):
    d = len(counts)
    from chartddm.atlas import Chart

    chart = Chart(0, ((0.0, 1.0),) * d, lambda x: np.broadcast_to(np.eye(d), (len(x), d, d)),
                  lambda x: np.ones(len(x)))
    g = build_uniform_grid(chart.bounds, counts)
    A = assemble_operator(chart, g, 0.0)
    from chartddm.grid import interior_mask

    sums = np.asarray(A.sum(axis=1)).ravel()[interior_mask(g)]
    assert np.all(np.abs(sums) <= 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31))
def test_cg_warm_start_short_circuit(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    import scipy.sparse as sp

    A = sp.csr_matrix(M @ M.T + n * np.eye(n))
    b = rng.normal(size=n)
    x, _ = cg_solve(A, b, tol=1e-12)
    x2, rep = cg_solve(A, b, x0=x, tol=1e-8)
    assert rep.iterations == 0 and np.array_equal(x, x2)


_FLAT = make_flat_square(overlap=0.23)
_FLAT_SUBS = build_subproblems(DDMConfig(_FLAT, counts_for_spacing(_FLAT, 0.1)))


@settings(max_examples=10, deadline=None)
@given(st.permutations([0, 1]), st.integers(1, 3), st.integers(0, 2**31))
def test_outer_step_order_and_worker_independent(order, workers, seed):
    rng = np.random.default_rng(seed)
    state = initial_state(_FLAT_SUBS)
    from chartddm.ddm import DDMState
    from chartddm.grid import FEFunction

    sols = []
    for s, sol in zip(_FLAT_SUBS, state.solutions):
        dofs = np.array(sol.dofs)
        dofs[s.kinds == 0] = rng.normal(size=int(np.sum(s.kinds == 0)))
        sols.append(FEFunction(s.grid, dofs))
    state = DDMState(0, tuple(sols))
    ref, _ = outer_step(state, _FLAT_SUBS)
    got, _ = outer_step(state, _FLAT_SUBS, order=order, workers=workers)
    for a, b in zip(ref.solutions, got.solutions):
        assert np.array_equal(a.dofs, b.dofs)

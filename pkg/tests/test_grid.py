import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from chartddm.errors import InvalidDataError, OutOfDomainError
from chartddm.grid import (
    FEFunction,
    TensorGrid,
    build_uniform_grid,
    classify_nodes,
    dump_fefunction,
    eval_fe,
    evaluate,
    interior_mask,
    interpolate,
    load_fefunction,
    locate_cell,
    shape_gradients,
    shape_values,
)


def test_uniform_grid_chart_spacing():
    g = build_uniform_grid([(-1.2, 1.2)] * 4, [10] * 4)
    assert_allclose(np.diff(g.axes[0]), 0.24)
    assert g.n_nodes == 11**4
    assert g.n_cells == 10**4
    assert g.max_spacing == pytest.approx(0.24)


def test_uniform_grid_single_cell_and_mixed_spacing():
    g = build_uniform_grid([(0.0, 1.0)], [1])
    assert_array_equal(g.axes[0], [0.0, 1.0])
    g = build_uniform_grid([(0.2, 1.0), (-2.0, 2.0)], [8, 20])
    assert_allclose(np.diff(g.axes[0]), 0.1)
    assert_allclose(np.diff(g.axes[1]), 0.2)


@pytest.mark.parametrize("bounds, counts", [([(0, 1)], [0]), ([(1, 1)], [2]), ([(0, 1)], [1.5])])
def test_uniform_grid_rejects_bad_input(bounds, counts):
    with pytest.raises(ValueError):
        build_uniform_grid(bounds, counts)


def test_tensor_grid_rejects_unsorted_axis():
    with pytest.raises(ValueError):
        TensorGrid([[0.0, 0.5, 0.4, 1.0]])


def test_numbering_is_lexicographic_axis0_fastest():
    g = build_uniform_grid([(0, 1), (0, 2)], [2, 1])
    assert_allclose(g.nodes[:4], [[0, 0], [0.5, 0], [1, 0], [0, 2]])


def test_locate_cell_examples():
    g = build_uniform_grid([(0.0, 1.0)], [4])
    loc = locate_cell(g, [0.3])
    assert loc.cell == (2,)
    assert loc.local[0] == pytest.approx(0.2)
    assert locate_cell(g, [0.25]).cell == (1,) and locate_cell(g, [0.25]).local == (1.0,)
    assert locate_cell(g, [1.0]).cell == (4,) and locate_cell(g, [1.0]).local == (1.0,)
    assert locate_cell(g, [0.0]).cell == (1,) and locate_cell(g, [0.0]).local == (0.0,)


def test_locate_clamps_within_tolerance_and_rejects_beyond():
    g = build_uniform_grid([(0.0, 1.0)], [4])
    assert locate_cell(g, [1.0 + 1e-14]).cell == (4,)
    with pytest.raises(OutOfDomainError):
        locate_cell(g, [1.0 + 1e-9])
    with pytest.raises(OutOfDomainError):
        locate_cell(g, [-0.1])


def test_shape_values_examples():
    assert_allclose(shape_values([0.0]), [1.0, 0.0])
    assert_allclose(shape_values([0.5, 0.5]), [0.25] * 4)
    w = shape_values(np.random.default_rng(1).uniform(size=(50, 4)))
    assert_allclose(w.sum(axis=1), 1.0, atol=1e-14)
    assert np.all((w >= 0) & (w <= 1))


def test_shape_gradients_match_finite_differences(rng):
    x = rng.uniform(0.1, 0.9, size=(5, 3))
    g = shape_gradients(x)
    eps = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = eps
        fd = (shape_values(x + e) - shape_values(x - e)) / (2 * eps)
        assert_allclose(g[:, :, k], fd, atol=1e-9)
    assert_allclose(g.sum(axis=1), 0.0, atol=1e-14)


def test_eval_fe_examples():
    g = build_uniform_grid([(0, 1)], [2])
    assert eval_fe(FEFunction(g, [0.0, 1.0, 0.0]), [0.25]) == pytest.approx(0.5)
    g2 = build_uniform_grid([(0, 1), (-1, 3)], [3, 5])
    assert eval_fe(FEFunction(g2, np.ones(g2.n_nodes)), [0.77, 0.1]) == pytest.approx(1.0)
    lin = interpolate(g2, lambda x: 2 * x[:, 0] - x[:, 1])
    pts = np.array([[0.1, 2.9], [0.5, -0.3], [1.0, 3.0]])
    assert_allclose(evaluate(lin, pts), 2 * pts[:, 0] - pts[:, 1], rtol=1e-12)


def test_multilinear_reproduction_on_nonuniform_grid(rng):
    axes = [np.sort(np.r_[0.0, rng.uniform(0, 1, 5), 1.0]) for _ in range(3)]
    g = TensorGrid(axes)

    def p(x):
        return 1 + x[:, 0] - 2 * x[:, 1] + 3 * x[:, 0] * x[:, 1] * x[:, 2] + x[:, 2]

    f = interpolate(g, p)
    pts = rng.uniform(0, 1, size=(200, 3))
    assert_allclose(f(pts), p(pts), rtol=1e-12)


def test_interpolate_examples():
    g = build_uniform_grid([(0, 1)] * 2, [3, 3])
    assert np.all(interpolate(g, lambda x: np.zeros(len(x))).dofs == 0)
    f = interpolate(g, lambda x: np.sin(x[:, 0]))
    assert_array_equal(evaluate(f, g.nodes), f.dofs)
    with pytest.raises(InvalidDataError):
        interpolate(g, lambda x: np.where(x[:, 0] > 0.5, np.nan, 0.0))


def test_interpolate_b4_inner_chart_value():
    from chartddm.manifolds import make_b4

    atlas = make_b4()
    x = np.array([[0.0, 0.0, 0.0, 0.5]])
    assert atlas.exact[0](x)[0] == pytest.approx(1.0)


def test_fefunction_is_read_only_and_checks_length():
    g = build_uniform_grid([(0, 1)], [2])
    f = FEFunction(g, np.zeros(3))
    with pytest.raises(ValueError):
        f.dofs[0] = 1.0
    with pytest.raises(ValueError):
        FEFunction(g, np.zeros(4))


def test_classify_nodes_examples():
    g = build_uniform_grid([(0, 1)], [2])
    faces = classify_nodes(g)
    assert faces[0, 0, 0] and not faces[0, 0, 1]
    assert not faces[1].any()
    assert faces[2, 0, 1]
    g2 = build_uniform_grid([(0, 1)] * 2, [2, 2])
    assert interior_mask(g2).sum() == 1
    g4 = build_uniform_grid([(0, 1)] * 4, [2] * 4)
    assert classify_nodes(g4)[0].sum() == 4


def test_dump_roundtrip_is_exact(tmp_path, rng):
    g = TensorGrid([np.array([0.0, 0.3, 1.0]), np.array([-1.0, 1.0 / 3.0, 2.0])])
    f = FEFunction(g, rng.normal(size=g.n_nodes))
    dump_fefunction(f, tmp_path / "f.fef")
    assert (tmp_path / "f.fef").read_text().startswith("ddm-fef v1 d=2 counts=2,2\n")
    back = load_fefunction(tmp_path / "f.fef")
    assert_array_equal(back.dofs, f.dofs)
    for a, b in zip(back.grid.axes, g.axes):
        assert_array_equal(a, b)


def test_load_rejects_foreign_file(tmp_path):
    (tmp_path / "x").write_text("hello\n")
    with pytest.raises(InvalidDataError):
        load_fefunction(tmp_path / "x")

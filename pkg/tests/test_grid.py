import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plapsys.errors import GridError
from plapsys.grid import DomainSpec, GridFunction, boundary_distance, build_grid, restrict_to_core
from plapsys.plap import apply_p_laplacian


def test_interval_node_counts():
    g = build_grid(DomainSpec.interval(0, 1, 11))
    assert g.n_nodes == 11
    assert list(g.boundary_index) == [0, 10]
    assert len(g.interior_index) == 9


def test_rectangle_boundary_count():
    g = build_grid(DomainSpec.rectangle(0, 1, 0, 2, 5))
    assert g.n_nodes == 25
    assert len(g.boundary_index) == 16


def test_too_coarse_is_rejected():
    with pytest.raises(GridError):
        build_grid(DomainSpec.interval(0, 1, 2))


def test_bad_specs_rejected():
    with pytest.raises(GridError):
        build_grid(DomainSpec.interval(1, 0, 10))
    with pytest.raises(GridError):
        build_grid(DomainSpec.radial_ball(1.0, 1, 10))
    with pytest.raises(GridError):
        build_grid(DomainSpec.interval(0, 1, 10, "boundary_refined", ratio=1.5))


@pytest.mark.parametrize("spec", [
    DomainSpec.interval(-1, 2, 17),
    DomainSpec.interval(-1, 1, 101, "boundary_refined", 0.85),
    DomainSpec.rectangle(0, 1, 0, 3, 9),
    DomainSpec.rectangle(0, 1, 0, 1, 21, "boundary_refined", 0.8),
    DomainSpec.radial_ball(2.0, 3, 41),
    DomainSpec.radial_ball(1.0, 2, 30, "boundary_refined", 0.9),
])
def test_cell_measures_tile_the_domain(spec):
    g = build_grid(spec)
    assert g.cell_measures.sum() == pytest.approx(g.measure(), rel=1e-12)


def test_distances_exact_and_zero_on_boundary():
    g = build_grid(DomainSpec.rectangle(0, 2, 0, 1, 11))
    x, y = g.nodes[:, 0], g.nodes[:, 1]
    np.testing.assert_allclose(g.distance, np.minimum.reduce([x, 2 - x, y, 1 - y]), atol=1e-15)
    assert np.all(g.distance[g.boundary_index] == 0.0)
    assert boundary_distance(g, 60) == pytest.approx(0.5)


def test_boundary_refined_grading_concentrates_nodes():
    g = build_grid(DomainSpec.interval(-1, 1, 801, "boundary_refined", 0.85))
    h = np.diff(g.nodes[:, 0])
    assert h.min() < 1e-7
    assert h[0] == pytest.approx(h[-1])
    assert np.all(np.diff(h[:400]) >= -1e-12 * h.max())


@pytest.mark.parametrize("N", [2, 3, 5])
def test_radial_laplacian_of_r_squared_is_exact(N):
    # div grad r^2 = 2N in R^N, reproduced exactly by the radial cell measures
    g = build_grid(DomainSpec.radial_ball(1.5, N, 23, "boundary_refined", 0.9))
    r = g.nodes[:, 0]
    lap = apply_p_laplacian(g, r ** 2, 2.0).values
    np.testing.assert_allclose(lap[g.interior_index], 2 * N, rtol=1e-10)


def test_restrict_to_core():
    g = build_grid(DomainSpec.interval(-1, 1, 21))
    idx = restrict_to_core(g, 0.5)
    assert np.all(g.distance[idx] >= 0.5 - 1e-12)
    assert len(idx) == 11
    with pytest.raises(GridError):
        restrict_to_core(g, 1.0)


def test_grid_function_is_immutable_and_checked():
    g = build_grid(DomainSpec.interval(0, 1, 5))
    f = GridFunction(g, np.arange(5.0))
    with pytest.raises(ValueError):
        f.values[0] = 3.0
    with pytest.raises(GridError):
        GridFunction(g, np.ones(4))
    with pytest.raises(GridError):
        GridFunction(g, [0, 1, np.nan, 0, 0])


def test_csv_columns():
    g = build_grid(DomainSpec.interval(0, 1, 3))
    text = g.evaluate(lambda x: 2 * x).to_csv()
    assert text.splitlines()[0] == "node_index,x,dist_boundary,value"
    assert text.splitlines()[2] == "1,0.5,0.5,1.0"


def test_grid_id_is_deterministic():
    a = build_grid(DomainSpec.interval(0, 1, 9))
    b = build_grid(DomainSpec.interval(0, 1, 9))
    c = build_grid(DomainSpec.interval(0, 1, 10))
    assert a.grid_id == b.grid_id != c.grid_id


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 60), a=st.floats(-5, 5), width=st.floats(0.1, 10),
       ratio=st.floats(0.5, 0.95))
def test_refined_interval_properties(n, a, width, ratio):
    g = build_grid(DomainSpec.interval(a, a + width, n, "boundary_refined", ratio))
    x = g.nodes[:, 0]
    assert np.all(np.diff(x) > 0)
    assert x[0] == a and x[-1] == a + width
    assert math.isclose(g.cell_measures.sum(), width, rel_tol=1e-12)


def test_small_uniform_grids():
    g = build_grid(DomainSpec.interval(0, 1, 5))
    np.testing.assert_allclose(g.nodes[:, 0], [0, 0.25, 0.5, 0.75, 1])
    assert list(g.boundary_index) == [0, 4]
    g = build_grid(DomainSpec.radial_ball(1.0, 3, 5))
    assert list(g.boundary_index) == [4]
    # radial cells carry the r^(N-1) weight: sum = R^3 / 3
    assert g.cell_measures.sum() == pytest.approx(1 / 3)
    g = build_grid(DomainSpec.rectangle(0, 1, 0, 1, 3))
    assert g.n_nodes == 9 and list(g.interior_index) == [4]


def test_core_with_zero_margin_is_everything():
    g = build_grid(DomainSpec.interval(0, 1, 5))
    assert list(restrict_to_core(g, 0.0)) == [0, 1, 2, 3, 4]
    assert list(restrict_to_core(g, 0.25)) == [1, 2, 3]


def test_radial_distance():
    g = build_grid(DomainSpec.radial_ball(2.0, 3, 9))
    assert boundary_distance(g, 2) == pytest.approx(1.5)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(3, 30), ratio=st.floats(0.5, 0.95))
def test_distance_is_lipschitz_along_edges(n, ratio):
    g = build_grid(DomainSpec.rectangle(0, 2, 0, 1, n, "boundary_refined", ratio))
    a, b = g.edges[:, 0], g.edges[:, 1]
    assert np.all(np.abs(g.distance[a] - g.distance[b]) <= g.edge_length + 1e-12)

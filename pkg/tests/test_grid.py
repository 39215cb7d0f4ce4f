import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hj_homogenize.errors import ConfigurationError, OutOfRangeError
from hj_homogenize.grid import (BoxGrid, GridFunction, interpolate, make_grid,
                                one_sided_gradients)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_spacing_is_period_over_cells():
    g = make_grid(1, [64], [1])
    assert g.spacing == (1 / 64,)
    assert g.spacing[0] * g.cells[0] == g.periods[0]


def test_two_dimensional_node_count():
    assert make_grid(2, [32, 32], [1, 1]).size == 1024


@pytest.mark.parametrize("args, fragment", [
    ((1, [3], [1]), "cells < 4"),
    ((2, [8, 3], [1, 1]), "axis 1"),
    ((1, [8], [0.0]), "period"),
    ((0, [8], [1]), "dim"),
])
def test_invalid_grids_are_rejected(args, fragment):
    with pytest.raises(ConfigurationError, match=fragment):
        make_grid(*args)


def test_grid_function_is_immutable_and_sized():
    g = make_grid(1, 8)
    f = GridFunction(g, np.arange(8.0))
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ConfigurationError):
        GridFunction(g, np.zeros(7))


def test_constant_has_zero_differences():
    g = make_grid(2, [8, 16])
    pm, pp = one_sided_gradients(GridFunction(g, np.full(g.shape, 3.5)))
    assert not pm.any() and not pp.any()


def test_forward_difference_of_sine():
    g = make_grid(1, 64)
    h = g.spacing[0]
    f = GridFunction(g, np.sin(2 * np.pi * g.axis_coords(0)))
    _, pp = one_sided_gradients(f)
    assert pp[0, 0] == pytest.approx(np.sin(2 * np.pi * h) / h, rel=1e-14)


def test_wraparound_on_four_cells():
    g = make_grid(1, 4)
    pm, pp = one_sided_gradients(GridFunction(g, [0.0, 1.0, 0.0, 1.0]))
    # h = 1/4: forward (1-0, 0-1, 1-0, 0-1)/h and backward (0-1, 1-0, 0-1, 1-0)/h
    np.testing.assert_array_equal(pp[0], [4.0, -4.0, 4.0, -4.0])
    np.testing.assert_array_equal(pm[0], [-4.0, 4.0, -4.0, 4.0])


@given(hnp.arrays(float, (6, 5), elements=finite), st.integers(-7, 7), st.integers(-7, 7))
def test_differences_commute_with_lattice_shifts(values, s0, s1):
    g = make_grid(2, [6, 5])
    pm, pp = one_sided_gradients(GridFunction(g, values))
    shifted = np.roll(values, (s0, s1), axis=(0, 1))
    qm, qp = one_sided_gradients(GridFunction(g, shifted))
    np.testing.assert_array_equal(qm, np.roll(pm, (s0, s1), axis=(1, 2)))
    np.testing.assert_array_equal(qp, np.roll(pp, (s0, s1), axis=(1, 2)))


@given(hnp.arrays(float, (7, 4), elements=finite))
def test_forward_differences_telescope(values):
    g = make_grid(2, [7, 4])
    _, pp = one_sided_gradients(GridFunction(g, values))
    scale = np.abs(values).max() / min(g.spacing) + 1.0
    for k in range(2):
        assert abs(pp[k].mean()) <= 1e-12 * scale


def test_interpolation_exact_at_nodes_and_midpoint():
    box = BoxGrid((0.0,), (1.0,), (2,))
    assert interpolate(box, [0.0, 1.0], [0.5]) == 0.5
    assert interpolate(box, [0.0, 1.0], [1.0]) == 1.0
    periodic = make_grid(1, 8)
    values = np.arange(8.0) ** 2
    for i in range(8):
        assert interpolate(periodic, values, [i / 8]) == values[i]


def test_periodic_interpolation_wraps():
    g = make_grid(1, 4)
    values = [0.0, 1.0, 2.0, 3.0]
    assert interpolate(g, values, [0.875]) == pytest.approx(1.5)
    assert interpolate(g, values, [1.25]) == pytest.approx(1.0)


def test_out_of_box_query_reports_query_and_box():
    box = BoxGrid((-1.0,), (1.0,), (9,))
    with pytest.raises(OutOfRangeError, match=r"1\.5.*\(-1\.0, 1\.0\)"):
        interpolate(box, np.zeros(9), [1.5])


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
       st.lists(st.floats(0, 1), min_size=2, max_size=2))
def test_affine_data_reproduced_on_tables(a, b, c, unit):
    box = BoxGrid((-2.0, -1.0), (2.0, 3.0), (9, 5))
    nodes = box.nodes()
    values = a + b * nodes[..., 0] + c * nodes[..., 1]
    q = np.array([-2.0 + 4.0 * unit[0], -1.0 + 4.0 * unit[1]])
    assert interpolate(box, values, q) == pytest.approx(a + b * q[0] + c * q[1], abs=1e-12)


@given(hnp.arrays(float, (5, 5), elements=finite),
       st.lists(st.floats(0, 1), min_size=2, max_size=2))
def test_interpolant_stays_within_cell_corners(values, unit):
    g = make_grid(2, [5, 5])
    q = np.array(unit) * 0.999
    i, j = (q * 5).astype(int)
    corners = values[np.ix_([i, (i + 1) % 5], [j, (j + 1) % 5])]
    v = interpolate(g, values, q)
    assert corners.min() - 1e-9 <= v <= corners.max() + 1e-9

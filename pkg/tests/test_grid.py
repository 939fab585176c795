import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from perfhom import grid as g
from perfhom.errors import GridMismatchError, ResolutionError


def test_box_basics():
    b = g.Box.cube(0.0, 2.0)
    assert b.volume == 4.0
    assert b.contains([0.0, 1.999]) and not b.contains([2.0, 1.0])
    assert b.intersect(g.Box.cube(1.0, 3.0)) == g.Box.cube(1.0, 2.0)
    assert b.dilate(-1.0).is_empty
    assert b.includes(g.Box.cube(0.5, 1.5))


def test_grid_rejects_misaligned_box():
    with pytest.raises(ValueError):
        g.Grid(g.Box.unit(2), 0.3)


def test_sample_constant(ball_set):
    grid = g.Grid(g.Box.unit(2), 0.1 / 20)
    u = g.sample(grid, 3.0, ball_set, 0.1)
    assert np.all(u.values[u.mask] == 3.0)


def test_sample_exact_nodes():
    # cell-centred nodes at 0, 0.25, 0.5, 0.75
    grid = g.Grid(g.Box.cube(-0.125, 0.875), 0.25)
    u = g.sample(grid, lambda x: x[..., 0])
    i = grid.index_of([0.5, 0.0])[0]
    np.testing.assert_array_equal(u.values[i], 0.5)


def test_mask_fraction_ball(ball_set):
    delta = 0.1
    grid = g.Grid(g.Box.unit(2), delta / 20)
    u = g.sample(grid, 0.0, ball_set, delta)
    assert u.mask.mean() == pytest.approx(math.pi / 16, rel=0.02)


def test_resolution_check(ball_set):
    grid = g.Grid(g.Box.unit(2), 0.05)
    with pytest.raises(ResolutionError):
        g.sample(grid, 0.0, ball_set, 0.1)


def test_masked_l2_examples(ball_set):
    grid = g.Grid(g.Box.unit(2), 0.1 / 16)
    u = g.sample(grid, lambda x: np.sin(x[..., 0]), ball_set, 0.1)
    assert g.masked_l2_distance(u, u) == 0.0
    m = u.mask.sum() * grid.cell_volume
    assert g.masked_l2_distance(u + 1.0, u) == pytest.approx(math.sqrt(m), rel=1e-13)
    other = g.Grid(g.Box.unit(2), 0.1 / 32)
    with pytest.raises(GridMismatchError):
        g.masked_l2_distance(u, g.sample(other, 0.0, ball_set, 0.1))


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, (3, 8, 8), elements=st.floats(-1e3, 1e3)))
def test_masked_l2_triangle_inequality(arr):
    grid = g.Grid(g.Box.unit(2), 0.125)
    u, v, w = (g.GridFunction(grid, a) for a in arr)
    duw = g.masked_l2_distance(u, w)
    assert duw <= g.masked_l2_distance(u, v) + g.masked_l2_distance(v, w) + 1e-9 * (1 + duw)


def test_grid_function_csv_roundtrip(tmp_path, rng):
    grid = g.Grid(g.Box((0.0, 0.5), (1.0, 1.0)), 0.125)
    u = g.GridFunction(grid, rng.normal(size=grid.shape), rng.random(grid.shape) < 0.6)
    path = tmp_path / "u.csv"
    u.to_csv(path, header_comment="x")
    back = g.GridFunction.from_csv(path, grid)
    np.testing.assert_array_equal(back.mask, u.mask)
    np.testing.assert_array_equal(back.values[u.mask], u.values[u.mask])


def test_masked_integral_affine():
    grid = g.Grid(g.Box.unit(2), 1 / 64)
    u = g.sample(grid, lambda x: 2 * x[..., 0] - x[..., 1])
    assert g.masked_integral(u) == pytest.approx(0.5, rel=1e-12)

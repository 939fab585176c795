import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfhom import interpolate as I
from perfhom.errors import PreconditionError
from perfhom.grid import Box, Grid, GridFunction, masked_l2_distance, sample


def _lattice(values, scale=1.0, kind="coarse"):
    values = np.asarray(values, dtype=float)
    idx = np.argwhere(np.ones(values.shape, bool))
    return I.LatticeAverages(scale, idx, values[tuple(idx.T)], kind, np.ones(len(idx), int))


def test_inclusion_averages_constant_and_affine(ball_set):
    delta = 0.125
    grid = Grid(Box.unit(2), delta / 16)
    const = I.inclusion_averages(sample(grid, 2.5, ball_set, delta), ball_set, delta)
    assert np.all(const.values == 2.5)
    assert len(const.values) == 7 * 7  # inclusions centred at delta*k, k = 1..7
    a, b = np.array([2.0, -1.0]), 0.3
    avg = I.inclusion_averages(sample(grid, lambda x: x @ a + b, ball_set, delta), ball_set, delta)
    np.testing.assert_allclose(avg.values, delta * avg.indices @ a + b, atol=1e-13)


def test_inclusion_average_hand_built(ball_set):
    delta = 0.125
    grid = Grid(Box.cube(-delta / 2, delta / 2), delta / 16)
    mask = np.zeros(grid.shape, bool)
    vals = np.zeros(grid.shape)
    for v, ij in enumerate([(7, 7), (8, 7), (7, 8), (8, 8), (6, 7)], start=1):
        mask[ij] = True
        vals[ij] = v
    avg = I.inclusion_averages(GridFunction(grid, vals, mask), ball_set, delta)
    assert avg.values.tolist() == [3.0]


def test_coarse_averages(ball_set):
    delta, eps = 1 / 16, 1 / 4
    grid = Grid(Box.unit(2), delta / 16)
    assert np.all(I.coarse_averages(sample(grid, -1.25, ball_set, delta), ball_set, delta, eps).values == -1.25)
    a = np.array([1.0, 3.0])
    avg = I.coarse_averages(sample(grid, lambda x: x @ a, ball_set, delta), ball_set, delta, eps)
    np.testing.assert_allclose(avg.values, eps * (avg.indices + 0.5) @ a, atol=1e-12)
    with pytest.raises(PreconditionError):
        I.coarse_averages(sample(grid, 0.0, ball_set, delta), ball_set, delta, 1.5 * delta)


def test_coarse_average_checkerboard_cancels(ball_set):
    delta = 1 / 16
    eps = 2 * delta
    # each cube eps*(k + [0,1)^2) covers exactly one 2-delta period of the sign pattern
    grid = Grid(Box.unit(2), delta / 16)
    u = sample(grid, lambda x: (-1.0) ** np.floor(x / delta + 0.5).sum(axis=-1), ball_set, delta)
    avg = I.coarse_averages(u, ball_set, delta, eps)
    assert np.max(np.abs(avg.values)) <= 1e-12


def test_piecewise_constant_step():
    grid = Grid(Box((0.0, 0.0), (2.0, 1.0)), 1 / 8)
    pc = I.piecewise_constant(_lattice([[0.0], [1.0]]), grid)
    x = grid.points()[..., 0]
    assert pc.mask.all()
    np.testing.assert_array_equal(pc.values, (x >= 1.0).astype(float))
    const = I.piecewise_constant(_lattice(np.full((2, 1), 7.0)), grid)
    assert np.all(const.values == 7.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([0.25, 0.5, 1.0]))
def test_kuhn_reproduces_affine(a1, a2, b, s):
    n = 5
    idx = np.argwhere(np.ones((n, n), bool))
    pos = s * idx
    avgs = I.LatticeAverages(s, idx, pos @ np.array([a1, a2]) + b, "coarse", np.ones(len(idx), int))
    # node positions of coarse data are s*(k + 1/2); shift the grid accordingly
    grid = Grid(Box.cube(s / 2, s / 2 + (n - 1) * s), s / 16)
    ku = I.kuhn_affine(avgs, grid)
    assert ku.mask.all()
    x = grid.points() - s / 2
    np.testing.assert_allclose(ku.values, x @ np.array([a1, a2]) + b, atol=1e-12 * (1 + abs(a1) + abs(a2) + abs(b)))


def test_kuhn_diagonal_value():
    avgs = I.LatticeAverages(1.0, np.array([[0, 0], [1, 0], [0, 1], [1, 1]]), np.array([0.0, 0.0, 0.0, 1.0]),
                             "coarse", np.ones(4, int))
    grid = Grid(Box.cube(0.75, 1.25), 0.5)  # single node (1, 1): lattice coordinates (1/2, 1/2)
    ku = I.kuhn_affine(avgs, grid)
    assert ku.values[0, 0] == 0.5
    const = I.kuhn_affine(I.LatticeAverages(1.0, avgs.indices, np.full(4, 2.0), "coarse", avgs.counts), grid)
    assert const.values[0, 0] == 2.0


def test_kuhn_and_piecewise_constant_converge_together(ball_set):
    f = lambda x: np.sin(3 * x[..., 0]) * np.cos(2 * x[..., 1])  # noqa: E731
    dists = []
    for delta in (1 / 8, 1 / 16, 1 / 32):
        grid = Grid(Box.unit(2), delta / 16)
        avgs = I.inclusion_averages(sample(grid, f, ball_set, delta), ball_set, delta)
        pc = I.piecewise_constant(avgs, grid)
        ku = I.kuhn_affine(avgs, grid)
        dists.append(masked_l2_distance(pc, ku))
    assert dists[0] > dists[1] > dists[2]
    assert dists[2] < 0.5 * dists[0]


def test_discrete_dirichlet_examples():
    assert I.discrete_dirichlet(_lattice(np.full((4, 4), 3.0), 0.5)) == 0.0
    s = 0.25
    one = I.LatticeAverages(s, np.array([[0, 0], [1, 0]]), np.array([0.0, 0.7]), "coarse", np.ones(2, int))
    assert I.discrete_dirichlet(one) == pytest.approx(s**0 * 0.7**2, rel=1e-15)
    N = 12
    a = np.array([1.5, -0.5])
    k = np.argwhere(np.ones((N, N), bool))
    lat = I.LatticeAverages(s, k, s * k @ a, "coarse", np.ones(len(k), int))
    # each axis has N(N-1) bonds of s^0 (a_i s)^2 -> |a|^2 * s^2 * N (N-1)
    assert I.discrete_dirichlet(lat) == pytest.approx(a @ a * s**2 * N * (N - 1), rel=1e-13)
    assert I.discrete_dirichlet(lat) == pytest.approx(a @ a * (N * s) ** 2, rel=0.1)


def test_jensen_bound_two_cells():
    lat = I.LatticeAverages(1.0, np.array([[0], [1]]), np.array([1.0, 3.0]), "coarse", np.array([2, 5]))
    # ordered pairs: 2 * eps^-3 * (2 v)(5 v) * (3 - 1)^2 with eps = 1, v = 0.5
    assert I.jensen_lower_bound(lat, 1.0, 0.5) == pytest.approx(2 * 1.0 * 2.5 * 4.0)


def test_lattice_csv(tmp_path):
    lat = _lattice([[1.0, 2.0]])
    lat.to_csv(tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().splitlines() == ["k1,k2,value", "0,0,1.0", "0,1,2.0"]

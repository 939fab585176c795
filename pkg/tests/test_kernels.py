import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfhom import kernels as K
from perfhom.errors import UnboundedProfileError


def test_evaluate_indicator_inside_and_outside():
    ker = K.indicator(1.0, 2)
    assert K.evaluate(ker, [0.5, 0.0]) == 1.0
    assert K.evaluate(ker, [1.5, 0.0]) == 0.0


def test_evaluate_exponential_closed_form():
    ker = K.exponential(1.0, 2)
    assert K.evaluate(ker, [3.0, 4.0]) == pytest.approx(math.exp(-5.0), rel=1e-14)
    assert math.exp(-5.0) == pytest.approx(6.7379e-3, rel=1e-4)


@pytest.mark.parametrize(
    "ker, expected",
    [
        (K.indicator(1.0, 2), math.pi / 4),
        (K.indicator(1.0, 1), 2.0 / 3.0),
        (K.indicator(1.0, 3), 4 * math.pi / 15),
        (K.exponential(1.0, 2), 6 * math.pi),  # (2 pi / 2) * Gamma(4)
        (K.exponential(2.0, 1), 2 * 2 / 2**3),  # 2 * Gamma(3) / lam^3 / d
    ],
)
def test_c_phi_closed_forms(ker, expected):
    assert K.c_phi(ker) == pytest.approx(expected, rel=1e-8)


def test_c_phi_zero_tabulated_profile():
    ker = K.tabulated([0.0, 0.5, 1.0], [0.0, 0.0, 0.0], 2)
    assert K.c_phi(ker) == 0.0


def test_tabulated_matches_indicator_and_reads_csv(tmp_path):
    path = tmp_path / "phi.csv"
    path.write_text("t,phi0\n0,1\n0.5,0.5\n1,0\n")
    ker = K.kernel_from_spec({"type": "tabulated", "file": str(path)}, 2)
    # phi0 = 1 on [0, .5), .5 on [.5, 1)
    expected = (2 * math.pi / 2) * (0.5**4 / 4 + 0.5 * (1 - 0.5**4) / 4)
    assert K.c_phi(ker) == pytest.approx(expected, rel=1e-10)
    path.write_text("r,phi\n0,1\n")
    with pytest.raises(ValueError, match="header"):
        K.TabulatedProfile.from_csv(path)


def test_tabulated_rejects_bad_samples():
    with pytest.raises(ValueError):
        K.tabulated([0.0, 1.0], [0.5, 1.0])
    with pytest.raises(UnboundedProfileError):
        K.tabulated([0.0, 1.0], [math.inf, 1.0])


def test_tail_second_moment_examples():
    ker = K.indicator(1.0, 2)
    assert K.tail_second_moment(ker, 1.0) == 0.0
    assert K.tail_second_moment(ker, 0.0) == pytest.approx(math.pi / 2, rel=1e-10)
    # exponential in 1-D: 2 * int_R^inf t^2 e^-t dt = 2 e^-R (R^2 + 2R + 2)
    e1 = K.exponential(1.0, 1)
    for R in (0.5, 3.0, 20.0):
        assert K.tail_second_moment(e1, R) == pytest.approx(2 * math.exp(-R) * (R * R + 2 * R + 2), rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 30.0), st.floats(0.0, 30.0), st.floats(0.5, 3.0))
def test_tail_second_moment_nonincreasing(r1, r2, lam):
    ker = K.exponential(lam, 2)
    lo, hi = min(r1, r2), max(r1, r2)
    assert K.tail_second_moment(ker, hi) <= K.tail_second_moment(ker, lo) * (1 + 1e-9)


def test_tail_identity_at_zero():
    for d in (1, 2, 3):
        ker = K.exponential(1.5, d)
        assert K.tail_second_moment(ker, 0.0) == pytest.approx(d * K.c_phi(ker), rel=1e-12)


def test_truncation_radius_meets_tolerance():
    ker = K.exponential(1.0, 2)
    R = K.truncation_radius(ker, 1e-6)
    assert K.tail_second_moment(ker, R) <= 1e-6 * 2 * K.c_phi(ker)
    assert K.tail_second_moment(ker, 0.99 * R) > 1e-6 * 2 * K.c_phi(ker)
    assert K.truncation_radius(K.indicator(0.7, 2)) == 0.7


def test_staircase_indicator_levels():
    st3 = K.staircase(K.indicator(1.0, 2), 3)
    radii = st3.profile.radii
    assert len(radii) == 3 * 2**3 + 1
    assert all(r == 1.0 for r in radii[:8])
    assert all(r == 0.0 for r in radii[8:])
    t = np.linspace(0, 2, 401)
    np.testing.assert_array_equal(st3.profile(t), (t < 1.0).astype(float))


def test_staircase_cardinality_n1():
    assert len(K.staircase(K.exponential(1.0, 2), 1).profile.radii) == 3


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_staircase_exponential_uniform(n):
    ker = K.exponential(1.0, 2)
    stn = K.staircase(ker, n)
    t = np.linspace(0.0, 10.0, 20001)
    gap = ker.profile(t) - stn.profile(t)
    assert gap.min() >= -1e-15  # lower variant
    assert gap.max() <= 2.0**-n + 1e-15


def test_staircase_upper_variant_brackets():
    ker = K.tabulated([0.0, 0.3, 0.8, 1.0], [1.0, 0.7, 0.2, 0.0])
    lo = K.staircase(ker, 3)
    up = K.staircase(ker, 3, upper=True)
    t = np.linspace(0.0, 1.2, 2401)
    phi = ker.profile(t)
    assert np.all(lo.profile(t) <= phi + 1e-15)
    assert np.all(phi <= up.profile(t) + 1e-15)
    assert np.all(up.profile(t) - lo.profile(t) <= 2.0**-3 + 1e-15)


def test_staircase_rejects_unbounded():
    class Singular:
        steps = None
        max_value = math.inf
        support = math.inf

    with pytest.raises(UnboundedProfileError):
        K.staircase(K.RadialKernel(Singular(), 2), 2)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0), st.floats(0.01, 0.4))
def test_cell_average_indicator_matches_sampling(x, y, w):
    ker = K.indicator(1.0, 2)
    exact = K.cell_average(ker, [[x, y]], w)[0]
    s = (np.arange(400) + 0.5) / 400 - 0.5
    X, Y = np.meshgrid(x + w * s, y + w * s, indexing="ij")
    sampled = np.mean(X * X + Y * Y < 1.0)
    assert abs(exact - sampled) <= 4.0 / 400 + 1e-12
    assert 0.0 <= exact <= 1.0


def test_cell_average_partition_of_disk():
    # the pixel averages over a tiling integrate the indicator exactly
    w = 0.05
    c = (np.arange(-30, 30) + 0.5) * w
    pts = np.stack(np.meshgrid(c, c, indexing="ij"), -1).reshape(-1, 2)
    total = K.cell_average(K.indicator(1.0, 2), pts, w).sum() * w * w
    assert total == pytest.approx(math.pi, rel=1e-12)

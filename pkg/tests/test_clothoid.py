import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hiernav.prm.clothoid import FIT_TOL, fit_g1, fit_segment, fresnel_moments, sample_batch
from hiernav.terrain import wrap_angle


def endpoint_error(seg, pose1):
    x, y, h = seg.end_pose()
    return math.hypot(x - pose1[0], y - pose1[1]), abs(wrap_angle(h - pose1[2]))


def test_straight_segment():
    seg = fit_segment((0, 0, 0.3), (3 * math.cos(0.3), 3 * math.sin(0.3), 0.3))
    assert seg.kappa0 == pytest.approx(0, abs=1e-12) and seg.dkappa == pytest.approx(0, abs=1e-12)
    assert seg.length == pytest.approx(3.0)
    assert np.allclose(seg.curvature(np.linspace(0, 3, 9)), 0.0, atol=1e-12)


def test_circular_arc_quarter_turn():
    # quarter circle of radius 2: constant curvature 0.5, length pi
    seg = fit_segment((0, 0, 0.0), (2, 2, math.pi / 2))
    assert seg.dkappa == pytest.approx(0.0, abs=1e-8)
    assert seg.kappa0 == pytest.approx(0.5, abs=1e-8)
    assert seg.length == pytest.approx(math.pi, abs=1e-8)


def test_u_turn_exceeds_bound():
    seg = fit_segment((0, 0, 0.0), (0, 2, math.pi))
    assert seg is None or seg.max_abs_curvature > 0.70


def test_coincident_points_do_not_converge():
    assert fit_segment((1, 1, 0), (1, 1, 1)) is None


@pytest.mark.parametrize("a,b,c", [(0.0, 0.0, 0.0), (1.0, 0.5, 0.2), (-7.0, 3.0, 1.1), (40.0, -9.0, -2.0)])
def test_fresnel_moments_against_quadrature(a, b, c):
    # X_k = int_0^1 t^k cos(a/2 t^2 + b t + c) dt
    got = fresnel_moments(np.array([a]), np.array([b]), np.array([c]))
    for k in range(3):
        xc = quad(lambda t: t ** k * math.cos(a / 2 * t * t + b * t + c), 0, 1, limit=200)[0]
        ys = quad(lambda t: t ** k * math.sin(a / 2 * t * t + b * t + c), 0, 1, limit=200)[0]
        assert got[k][0] == pytest.approx(xc, abs=1e-10)
        assert got[3 + k][0] == pytest.approx(ys, abs=1e-10)


@settings(max_examples=150, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-math.pi, math.pi),
       st.floats(0.3, 4.0), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_fit_reproduces_endpoints(x, y, th0, r, bearing, th1):
    p1 = (x + r * math.cos(bearing), y + r * math.sin(bearing), th1)
    seg = fit_segment((x, y, th0), p1)
    if seg is not None:
        dpos, dh = endpoint_error(seg, p1)
        assert dpos <= FIT_TOL and dh <= FIT_TOL
        assert seg.x0 == x and seg.y0 == y
        assert abs(wrap_angle(seg.theta0 - th0)) < 1e-12


def test_free_endpoint_uses_arc():
    th, k0, dk, L, ok = fit_g1(np.array([0.0, 0.0]), 0.0, np.array([2.0, 2.0]), 1.234, False, True)
    assert ok[0] and dk[0] == pytest.approx(0.0)
    assert k0[0] == pytest.approx(0.5, abs=1e-9)


def test_both_ends_free_is_straight():
    th, k0, dk, L, ok = fit_g1(np.array([0.0, 0.0]), 2.0, np.array([3.0, 4.0]), -1.0, True, True)
    assert ok[0] and k0[0] == 0.0 and dk[0] == 0.0 and L[0] == pytest.approx(5.0)
    assert th[0] == pytest.approx(math.atan2(4, 3))


def test_sample_batch_spacing_and_ends():
    seg = fit_segment((0, 0, 0.0), (3, 1, 0.8))
    owner, s, xy, heading, kappa = sample_batch([0.0], [0.0], [seg.theta0], [seg.kappa0], [seg.dkappa],
                                                [seg.length], 0.25)
    assert (owner == 0).all()
    assert s[0] == 0.0 and s[-1] == pytest.approx(seg.length)
    assert np.diff(s).max() <= 0.25 + 1e-12
    np.testing.assert_allclose(xy[-1], [3, 1], atol=FIT_TOL)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiernav.executive import (DYNAMIC, FAILSAFE, LONG_TERM, V_MAX, W_MAX, ModeState, ReferencePath,
                               VelocityCommand, dynamic_area_check, local_goal, plan_command, pure_pursuit_step,
                               select_mode, slow_for_planning, waypoint_arrival)
from hiernav.planners.common import RobotState

STRAIGHT = ReferencePath([(0, 0), (100, 0)])


class TestDynamicArea:
    def test_five_metres_ahead(self):
        assert dynamic_area_check([(5, 0)], [], (0, 0, 0), 1.0)

    def test_seven_metres_ahead(self):
        assert not dynamic_area_check([(7, 0)], [], (0, 0, 0), 1.0)

    def test_abeam_inside_semicircle(self):
        assert dynamic_area_check([(0, 3.9)], [], (0, 0, 0), 0.0)

    def test_cells_trigger_too(self):
        assert dynamic_area_check([], [(3, 0)], (0, 0, 0), 0.0)
        assert not dynamic_area_check([], [(-3, 0)], (0, 0, 0), 0.0)

    def test_framework_radius_limits_tracks(self):
        # sector reaches 4 + 2 * 2.5 = 9 m, the framework radius stops at 8 m
        assert not dynamic_area_check([(8.5, 0)], [], (0, 0, 0), 2.5)
        assert dynamic_area_check([], [(8.5, 0)], (0, 0, 0), 2.5)


class TestSelectMode:
    def test_failsafe_dominates(self):
        assert select_mode(ModeState(), True, True, 0.0).mode == FAILSAFE

    def test_latch_two_seconds(self):
        st_ = select_mode(ModeState(), False, True, 10.0)
        assert st_.mode == DYNAMIC and st_.replan and st_.triggered
        ticks = np.round(np.arange(10.2, 13.0, 0.2), 10)
        modes = []
        for t in ticks:
            st_ = select_mode(st_, False, False, float(t))
            modes.append(st_.mode)
        for t, m in zip(ticks, modes):
            assert m == (DYNAMIC if t < 12.0 - 1e-9 else LONG_TERM), t
        assert not any(b == DYNAMIC and a == LONG_TERM for a, b in zip(modes, modes[1:]))

    def test_never_triggered(self):
        st_ = ModeState()
        for t in np.arange(0, 5, 0.2):
            st_ = select_mode(st_, False, False, float(t))
            assert st_.mode == LONG_TERM

    def test_retrigger_extends_latch(self):
        st_ = select_mode(ModeState(), False, True, 0.0)
        st_ = select_mode(st_, False, True, 1.0)
        assert not st_.triggered
        assert select_mode(st_, False, False, 2.8).mode == DYNAMIC
        assert select_mode(st_, False, False, 3.0).mode == LONG_TERM

    def test_latch_survives_failsafe(self):
        st_ = select_mode(ModeState(), False, True, 0.0)
        st_ = select_mode(st_, True, False, 0.4)
        assert st_.mode == FAILSAFE
        assert select_mode(st_, False, False, 0.6).mode == DYNAMIC


class TestSlowForPlanning:
    def test_trapezoid(self):
        out = slow_for_planning(RobotState(0, 0, 0, 1.0))
        assert out.x == pytest.approx(0.15) and out.y == pytest.approx(0.0)
        assert out.speed == pytest.approx(0.5) and out.t == pytest.approx(0.2)

    def test_along_path(self):
        path = ReferencePath([(0, 0), (0.1, 0), (0.1, 10)])
        out = slow_for_planning(RobotState(0, 0, 0, 1.0), path=path, s_hint=0.0)
        np.testing.assert_allclose([out.x, out.y], [0.1, 0.05], atol=1e-12)
        assert out.heading == pytest.approx(math.pi / 2)

    @pytest.mark.parametrize("v,delay", [(0.0, 0.2), (1.0, 0.0)])
    def test_unchanged(self, v, delay):
        r = RobotState(1, 2, 0.3, v, 5.0)
        out = slow_for_planning(r, delay=delay)
        assert (out.x, out.y, out.heading, out.speed) == (1, 2, 0.3, v)

    def test_negative_delay(self):
        with pytest.raises(ValueError):
            slow_for_planning(RobotState(0, 0, 0, 1.0), delay=-0.1)


class TestLocalGoal:
    def test_ten_metres_ahead(self):
        np.testing.assert_allclose(local_goal(STRAIGHT, (20, 0)), [30, 0])

    def test_clamped_to_waypoint(self):
        np.testing.assert_allclose(local_goal(STRAIGHT, (96, 0)), [100, 0])

    def test_lateral_offset_projects(self):
        np.testing.assert_allclose(local_goal(STRAIGHT, (20, 3)), [30, 0])

    def test_stops_at_intermediate_goal(self):
        np.testing.assert_allclose(local_goal(STRAIGHT, (20, 0), s_goal=25.0), [25, 0])

    @settings(max_examples=50)
    @given(st.floats(0, 60), st.floats(-5, 5))
    def test_arc_distance_is_min_ten_remaining(self, x, y):
        path = ReferencePath([(0, 0), (30, 0), (30, 30)])
        s_star, _ = path.project((x, y))
        g = local_goal(path, (x, y))
        s_g, d = path.project(g)
        assert d == pytest.approx(0, abs=1e-9)
        assert s_g - s_star == pytest.approx(min(10.0, path.length - s_star), abs=1e-9)


class TestPurePursuit:
    def test_on_straight_path_full_speed(self):
        cmd = pure_pursuit_step(RobotState(10, 0, 0, 1.0), STRAIGHT, 0.2)
        assert cmd.vx == pytest.approx(V_MAX) and cmd.vy == pytest.approx(0.0)

    def test_at_goal_within_accuracy(self):
        assert pure_pursuit_step(RobotState(99.5, 0.2, 0), STRAIGHT, 0.2, accuracy=1.0) == VelocityCommand()
        assert pure_pursuit_step(RobotState(3.5, 4, 0), (3, 4), 0.2, accuracy=1.0) == VelocityCommand()

    def test_cross_track_correction(self):
        # robot 1 m right of a path heading +x: the command must pull left (+y)
        cmd = pure_pursuit_step(RobotState(10, -1, 0), STRAIGHT, 0.2)
        assert cmd.vy > 0

    def test_point_target(self):
        cmd = pure_pursuit_step(RobotState(0, 0, 0), (0.3, 0.4), 0.2)
        np.testing.assert_allclose([cmd.vx, cmd.vy], [0.3, 0.4])

    def test_decelerates_before_path_end(self):
        cmd = pure_pursuit_step(RobotState(99.92, 0, 0), STRAIGHT, 0.2)
        assert cmd.speed == pytest.approx(math.sqrt(2 * 0.08), abs=1e-9)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            pure_pursuit_step(RobotState(0, 0, 0), (1, 0), 0.0)

    @settings(max_examples=80)
    @given(st.floats(-20, 120), st.floats(-20, 20), st.floats(-math.pi, math.pi))
    def test_limits(self, x, y, h):
        for target in (STRAIGHT, (x + 7.0, y - 3.0)):
            cmd = pure_pursuit_step(RobotState(x, y, h, 0.5), target, 0.2)
            assert cmd.speed <= V_MAX + 1e-12 and abs(cmd.omega) <= W_MAX + 1e-12
        cmd = plan_command(RobotState(x, y, h), (x + 5, y), 0.2)
        assert cmd.speed <= V_MAX + 1e-12 and abs(cmd.omega) <= W_MAX + 1e-12


class TestReferencePath:
    def test_duplicate_points_dropped(self):
        p = ReferencePath([(0, 0, 0), (0, 0, 0), (3, 4, 1)])
        assert len(p.points) == 2 and p.length == 5.0
        assert np.all(np.diff(p.s) > 0)

    def test_project_respects_window(self):
        p = ReferencePath([(0, 0), (10, 0), (10, 10), (0, 10)])
        s, d = p.project((5, 9), 0.0, 12.0)
        assert s == pytest.approx(12.0) and d == pytest.approx(math.hypot(5, 7))
        s_full, d_full = p.project((5, 9))
        assert s_full == pytest.approx(25.0) and d_full == pytest.approx(1.0)

    def test_needs_points(self):
        with pytest.raises(ValueError):
            ReferencePath(np.zeros((0, 2)))


class TestArrival:
    def test_inside(self):
        assert waypoint_arrival((0.8, 0), (0, 0), 1.0)

    def test_outside(self):
        assert not waypoint_arrival((1.2, 0), (0, 0), 1.0)

    def test_bad_accuracy(self):
        with pytest.raises(ValueError):
            waypoint_arrival((0, 0), (0, 0), 0.0)

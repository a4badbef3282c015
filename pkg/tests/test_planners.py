import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiernav.perception import occupancy_snapshot
from hiernav.planners.common import ActionSpace, CostParams, Plan, RobotState
from hiernav.planners.cost import SIGMA0, SIGMA_RATE, cv_predict, evaluate_state, predict_horizon, uncertainty
from hiernav.planners.failsafe import fs_check
from hiernav.planners.mcts import mcts_plan
from hiernav.planners.pf import pf_force, pf_plan
from hiernav.terrain import wrap_angle

ROOT = RobotState(0.0, 0.0, 0.0, 0.0)


class TestEvaluateState:
    def test_at_goal_no_agents(self):
        assert evaluate_state((2, 3), (2, 3)) == 0.0

    def test_agent_beyond_d_ignored(self):
        assert evaluate_state((0, 0), (3, 0), [((3, 0), 5.0)]) == 9.0
        assert evaluate_state((0, 0), (3, 0), [((0, 3), 5.0)]) == 9.0

    def test_hand_example(self):
        assert evaluate_state((0, 0), (3, 0), [((1, 0), 0.5)]) == pytest.approx(9.5)

    def test_coincident_agent_capped(self):
        assert evaluate_state((0, 0), (0, 0), [((0, 0), 0.5)]) == pytest.approx(50.0)

    @settings(max_examples=50)
    @given(st.floats(-50, 50), st.floats(-50, 50),
           st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 2)), max_size=5))
    def test_translation_invariant(self, sx, sy, agents):
        a = [((x, y), u) for x, y, u in agents]
        b = [((x + sx, y + sy), u) for x, y, u in agents]
        assert evaluate_state((0.3, -0.2), (4, 1), a) == pytest.approx(
            evaluate_state((0.3 + sx, -0.2 + sy), (4 + sx, 1 + sy), b), rel=1e-6, abs=1e-6)


class TestPrediction:
    def test_stationary_agent(self):
        for k in range(9):
            mean, u = cv_predict(([(1, 2)], [(0, 0)]), k)
            np.testing.assert_allclose(mean, [[1, 2]])
            assert u[0] == pytest.approx(math.pi * (SIGMA0 + SIGMA_RATE * k * 0.2) ** 2)

    def test_moving_agent_five_steps(self):
        mean, _ = cv_predict(([(0, 0)], [(1, 0)]), 5)
        np.testing.assert_allclose(mean, [[1.0, 0.0]])

    def test_base_uncertainty(self):
        assert uncertainty(0) == pytest.approx(math.pi * 0.01)

    def test_uncertainty_grows_and_stays_below_d(self):
        _, u = predict_horizon(([(0, 0)], [(0, 0)]), 8)
        assert np.all(np.diff(u) > 0)
        assert SIGMA0 + SIGMA_RATE * 1.6 < 2.0

    def test_horizon_matches_single_steps(self):
        tr = ([(1, 1), (-2, 0)], [(0.5, -1), (1, 1)])
        means, u = predict_horizon(tr, 8)
        for k in range(9):
            m, uk = cv_predict(tr, k)
            np.testing.assert_allclose(means[k], m)
            assert u[k] == uk[0]


class TestFailSafe:
    def test_dead_ahead_in_sector(self):
        assert fs_check([(2.5, 0)], (0, 0, 0), 1.0)

    def test_off_axis_outside(self):
        a = math.radians(80)
        assert not fs_check([(2.5 * math.cos(a), 2.5 * math.sin(a))], (0, 0, 0), 1.0)

    def test_left_inside_semicircle(self):
        assert fs_check([(0, 1.9)], (0, 0, 0), 0.0)

    def test_behind_is_ignored(self):
        assert not fs_check([(-1.0, 0.0)], (0, 0, 0), 1.0)

    def test_empty(self):
        assert not fs_check(np.zeros((0, 2)), (0, 0, 0), 1.0)

    def test_negative_speed(self):
        with pytest.raises(ValueError):
            fs_check([(1, 0)], (0, 0, 0), -1.0)

    @settings(max_examples=60)
    @given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-math.pi, math.pi), st.floats(0, 1.5))
    def test_rotation_invariant(self, x, y, h, v):
        c, s = math.cos(h), math.sin(h)
        assert fs_check([(x, y)], (0, 0, 0), v) == fs_check([(c * x - s * y + 1, s * x + c * y - 2)], (1, -2, h), v)


def check_plan_shape(plan, root, actions=ActionSpace()):
    heads = np.r_[root.heading, plan.heading]
    for k in range(len(plan)):
        assert abs(wrap_angle(heads[k + 1] - heads[k])) <= math.radians(max(map(abs, actions.turns_deg))) + 1e-9
        assert abs(wrap_angle(plan.heading[k] - root.heading)) <= math.radians(actions.sector_deg) + 1e-9
    prev = np.r_[[root.xy], plan.xy]
    for k in range(len(plan)):
        step = prev[k + 1] - prev[k]
        if plan.speed[k] > 0:
            # never reversing: every step goes along its heading
            assert step @ (math.cos(plan.heading[k]), math.sin(plan.heading[k])) > 0


class TestMCTS:
    def test_open_field_heads_for_goal(self):
        plan = mcts_plan(ROOT, (10, 0), params=CostParams(budget_iters=200))
        assert np.hypot(*plan.xy[0] - (10, 0)) < 10.0
        assert len(plan) == 8
        check_plan_shape(plan, ROOT)

    @pytest.mark.parametrize("ax,ay", [(3.0, 3.0), (3.5, 2.5), (4.0, 3.0), (5.0, 2.5), (6.0, 4.0)])
    def test_crossing_agent_kept_beyond_d(self, ax, ay):
        tracks = (np.array([[ax, ay]]), np.array([[0.0, -1.0]]))
        root = RobotState(0, 0, 0, 0.9)
        plan = mcts_plan(root, (10, 0), tracks, params=CostParams(budget_iters=2000))
        means, _ = predict_horizon(tracks, 8)
        dist = [np.hypot(*(plan.xy[k] - means[k + 1, 0])) for k in range(len(plan))]
        assert min(dist) >= 2.0
        check_plan_shape(plan, root)

    def test_wall_ahead_gives_stop(self):
        wall = [(0.6, -20), (1.0, -20), (1.0, 20), (0.6, 20)]
        grid = occupancy_snapshot([wall], (0, 0), dilation=1.5)
        plan = mcts_plan(ROOT, (10, 0), occupancy=grid, params=CostParams(budget_iters=200))
        assert plan.is_stop

    def test_plan_avoids_occupied_cells(self):
        box = [(2, -1), (3, -1), (3, 1), (2, 1)]
        grid = occupancy_snapshot([box], (0, 0), dilation=1.5)
        plan = mcts_plan(ROOT, (8, 0), occupancy=grid, params=CostParams(budget_iters=500))
        pts = np.r_[[ROOT.xy], plan.xy]
        fine = np.concatenate([np.linspace(a, b, 50) for a, b in zip(pts[:-1], pts[1:])])
        # oracle: distance to the box itself, independent of the raster
        dx = np.maximum(np.maximum(2 - fine[:, 0], fine[:, 0] - 3), 0)
        dy = np.maximum(np.maximum(-1 - fine[:, 1], fine[:, 1] - 1), 0)
        assert np.hypot(dx, dy).min() > 1.0
        assert not grid.occupied_at(fine).any()

    def test_deterministic(self):
        tracks = (np.array([[3.0, 1.0], [4.0, -2.0]]), np.array([[0.0, -0.5], [-0.3, 0.6]]))
        a = mcts_plan(ROOT, (10, 0), tracks, params=CostParams(budget_iters=300), seed=4)
        b = mcts_plan(ROOT, (10, 0), tracks, params=CostParams(budget_iters=300), seed=4)
        np.testing.assert_array_equal(a.xy, b.xy)
        assert a.value == b.value

    def test_anytime_value_monotone(self):
        tracks = (np.array([[3.0, 1.0], [4.0, -2.0], [2.0, 2.5]]),
                  np.array([[0.0, -0.5], [-0.3, 0.6], [0.2, -0.8]]))
        vals = [mcts_plan(ROOT, (10, 0), tracks, params=CostParams(budget_iters=b), seed=1).value
                for b in (1, 5, 20, 100, 400)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_stop_plan_helper(self):
        p = Plan.stop(RobotState(1, 2, 0.5, 0.0, t=3.0))
        assert p.is_stop and len(p) == 8
        np.testing.assert_allclose(p.t, 3.0 + 0.2 * np.arange(1, 9))


class TestPotentialField:
    def test_straight_to_goal(self):
        plan = pf_plan(ROOT, (10, 0))
        np.testing.assert_allclose(plan.xy[:, 1], 0.0, atol=1e-12)
        np.testing.assert_allclose(np.diff(np.r_[0.0, plan.xy[:, 0]]), 0.9 * 0.2)

    def test_quadratic_attraction(self):
        np.testing.assert_allclose(pf_force((0, 0), (0.4, 0.3), []), [0.4, 0.3])

    def test_pushed_away_from_agent_in_between(self):
        # agent 0.6 m ahead: repulsion 2 * (1/0.6 - 1/2) / 0.36 = 6.48 beats attraction 1.5
        tracks = (np.array([[0.6, 0.0]]), np.zeros((1, 2)))
        plan = pf_plan(ROOT, (1.5, 0), tracks)
        first = plan.xy[0] - ROOT.xy
        assert first @ np.array([0.6, 0.0]) < 0

    def test_agent_one_metre_ahead_slows_and_repels(self):
        f = pf_force((0, 0), (3, 0), [(1, 0)])
        # attraction 3 minus repulsion 2*(1/1 - 1/2)/1 = 1
        np.testing.assert_allclose(f, [2.0, 0.0])

    def test_symmetric_pair_goes_straight_deterministically(self):
        tracks = (np.array([[1.5, 0.8], [1.5, -0.8]]), np.zeros((2, 2)))
        a = pf_plan(ROOT, (6, 0), tracks)
        b = pf_plan(ROOT, (6, 0), tracks)
        np.testing.assert_array_equal(a.xy, b.xy)
        np.testing.assert_allclose(a.heading, 0.0, atol=1e-12)

    def test_trap_returns_stop(self):
        # attraction 1 at 1 m balanced exactly by an agent standing on the goal:
        # repulsion 2 * (1/1 - 1/2) / 1^2 = 1
        tracks = (np.array([[1.0, 0.0]]), np.zeros((1, 2)))
        plan = pf_plan(ROOT, (1.0, 0), tracks)
        assert plan.is_stop

    def test_occupied_cells_repel(self):
        box = [(1.0, -0.25), (1.5, -0.25), (1.5, 0.25), (1.0, 0.25)]
        grid = occupancy_snapshot([box], (0, 0), dilation=0.0)
        plan = pf_plan(ROOT, (1.2, 0.0), occupancy=grid)
        assert plan.xy[0, 0] < 0.9 * 0.2

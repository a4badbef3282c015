"""Deterministic closed-loop simulation on a 0.2 s tick.

Each tick senses and tracks the crowd, checks the fail-safe zone and the
dynamic area, selects a mode, plans or tracks the reference, integrates the
robot as a holonomic point with bounded acceleration, advances the crowd in
four 0.05 s sub-steps and appends one record to the run log.

A dynamic plan computed during a tick takes effect on the next tick: the
planner starts from the state the robot is expected to reach by then.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import crowd as crowd_mod
from .energy import instantaneous_power
from .executive import (ACCEL, DYNAMIC, FAILSAFE, FRAMEWORK_RADIUS, LONG_TERM, W_MAX, ModeState,
                        ReferencePath, VelocityCommand, dynamic_area_check, local_goal, plan_command,
                        pure_pursuit_step, select_mode, slow_for_planning, waypoint_arrival)
from .perception import SENSING_RANGE, TrackSet, occupancy_snapshot, sense
from .planners.common import DT, ActionSpace, CostParams, Plan, RobotState
from .planners.failsafe import fs_check
from .planners.mcts import mcts_plan
from .planners.pf import pf_plan
from .prm.graph import goal_graph
from .prm.roadmap import PRMParams, generate_roadmap
from .prm.tour import Tour, solve_tour
from .runlog import RunLog, format_points
from .scenario import Scenario

log = logging.getLogger(__name__)

SUB_STEPS = int(round(DT / crowd_mod.SUB_DT))
SLOPE_STEP = 0.5  # m ahead used to read the terrain slope along travel
PROGRESS_SLACK = 1.0  # m the reference projection may fall back behind the best progress

_TOUR_CACHE: dict = {}


@dataclass
class OfflinePlan:
    tour: Tour
    reference: ReferencePath
    goals: np.ndarray  # (n, 2) in visiting order
    accuracy: np.ndarray
    order: list[int]  # scenario goal indices in visiting order


def prm_params(scenario: Scenario) -> PRMParams:
    pc = scenario.planner
    return PRMParams(n_s=pc.n_s, r_conn=pc.r_conn, kappa_max=pc.kappa_max, subsample_step=pc.subsample_step,
                     delta=pc.delta, rng_seed=0 if pc.prm_seed is None else pc.prm_seed,
                     robot_radius=scenario.run.robot_radius, nominal_speed=pc.nominal_speed,
                     sample_bounds=pc.sample_bounds)


def plan_offline(scenario: Scenario, use_cache: bool = True) -> OfflinePlan:
    """Roadmap, goal graph and tour from the robot start through every goal.

    The start pose is node 0 of the goal graph and the last listed goal is the
    end of the tour, or the start again for a closed tour.
    """
    key = (scenario.world_key, scenario.run.robot_radius, scenario.run.closed)
    if use_cache and scenario.world_key and key in _TOUR_CACHE:
        return _TOUR_CACHE[key]
    sx, sy, _ = scenario.start
    nodes = np.vstack([[sx, sy], scenario.goals])
    roadmap, _ = generate_roadmap(scenario.world, nodes, prm_params(scenario), scenario.energy)
    gg = goal_graph(roadmap)
    n = gg.n
    end = 0 if scenario.run.closed else n - 1
    tour = solve_tour(gg, 0, end, roadmap, scenario.world)
    order = [g - 1 for g in tour.order[1:]]
    goals = scenario.goals[order]
    acc = scenario.accuracy[order]
    goal_s = list(tour.goal_arclength[1:])
    if scenario.run.closed:
        goals = np.vstack([goals, [[sx, sy]]])
        acc = np.append(acc, acc.min())
        goal_s.append(None)
    reference = ReferencePath(tour.polyline, None, None)
    goal_s = [reference.length if s is None else min(s, reference.length) for s in goal_s]
    reference = ReferencePath(tour.polyline, goal_s, acc)
    plan = OfflinePlan(tour, reference, goals, acc, order)
    if use_cache and scenario.world_key:
        _TOUR_CACHE[key] = plan
    return plan


def build_crowd(scenario: Scenario, rng) -> crowd_mod.CrowdState:
    cc = scenario.crowd
    arena = cc.arena or scenario.world.bounds
    sx, sy, _ = scenario.start
    parts = []
    if cc.density > 0:
        c = crowd_mod.spawn_density(arena, cc.density, rng, keep_out=[(sx, sy, cc.keep_out)], radius=cc.radius,
                                    neighbour_dist=cc.neighbour_dist, policy=cc.policy)
        inside = scenario.world.obstacles.contains(c.pos) if len(scenario.world.obstacles) else np.zeros(len(c), bool)
        parts.append((c.pos[~inside], c.goal[~inside], c.pref_speed[~inside]))
    if cc.agents:
        a = np.array(cc.agents, dtype=float)
        parts.append((a[:, :2], a[:, 2:4], a[:, 4]))
    if not parts:
        return crowd_mod.CrowdState.from_agents(np.zeros((0, 2)), np.zeros((0, 2)), 1.0, arena, cc.radius,
                                                cc.neighbour_dist, cc.policy)
    pos = np.vstack([p[0] for p in parts])
    goal = np.vstack([p[1] for p in parts])
    speed = np.concatenate([p[2] for p in parts])
    return crowd_mod.CrowdState.from_agents(pos, goal, speed, arena, cc.radius, cc.neighbour_dist, cc.policy)


class Simulation:
    """One seeded run; ``run()`` returns the RunLog."""

    def __init__(self, scenario: Scenario, offline: OfflinePlan | None = None):
        self.sc = scenario
        self.offline = offline or plan_offline(scenario)
        self.ref = self.offline.reference
        ss = np.random.SeedSequence(scenario.run.seed)
        crowd_ss, sense_ss, plan_ss = ss.spawn(3)
        self.crowd_rng = np.random.default_rng(crowd_ss)
        self.sense_rng = np.random.default_rng(sense_ss)
        self.plan_rng = np.random.default_rng(plan_ss)
        self.crowd = build_crowd(scenario, self.crowd_rng)
        self.tracks = TrackSet()
        # planners measure surface to surface; the safety zones are centred on the
        # robot and see the near surface of each agent, as a range sensor would
        self.agent_offset = scenario.run.robot_radius + scenario.crowd.radius
        self.zone_offset = scenario.crowd.radius
        pc = scenario.planner
        self.cost_params = CostParams(d=pc.d, horizon=pc.horizon, budget_iters=pc.budget_iters,
                                      offset=self.agent_offset, zone_offset=self.zone_offset, dt=DT)
        self.actions = ActionSpace()
        sx, sy, sh = scenario.start
        self.pos = np.array([sx, sy], dtype=float)
        self.vel = np.zeros(2)
        self.heading = float(sh)
        self.t = 0.0
        self.mode = ModeState()
        self.plan: Plan | None = None
        self.plan_id = 0
        self.active_plan_id = 0
        self.goal_idx = 0
        self.s_lo = 0.0
        self.dwell_until: float | None = None
        self.finished = False
        self.failures = 0

    # --- helpers ---

    @property
    def speed(self) -> float:
        return float(math.hypot(*self.vel))

    @property
    def travel_dir(self) -> float:
        return math.atan2(self.vel[1], self.vel[0]) if self.speed > 1e-6 else self.heading

    def state(self) -> RobotState:
        return RobotState(float(self.pos[0]), float(self.pos[1]), self.heading, self.speed, self.t)

    def s_goal(self) -> float:
        return float(self.ref.goal_s[min(self.goal_idx, len(self.ref.goal_s) - 1)])

    def current_goal(self) -> np.ndarray:
        return self.offline.goals[min(self.goal_idx, len(self.offline.goals) - 1)]

    def _nearby_agents(self, radius: float = SENSING_RANGE) -> np.ndarray:
        if not len(self.crowd):
            return np.zeros((0, 2))
        d = np.hypot(*(self.crowd.pos - self.pos).T)
        return self.crowd.pos[d <= radius]

    def _occupancy(self, dilation: float):
        if not len(self.sc.world.obstacles):
            return None
        return occupancy_snapshot(self.sc.world.obstacles, self.pos, dilation=dilation)

    def _record(self, rl: RunLog, power: float, energy: float, n_detected: int, dwell: bool):
        agents = self._nearby_agents()
        min_d = float(np.min(np.hypot(*(self.crowd.pos - self.pos).T))) if len(self.crowd) else math.inf
        conf = self.tracks.confirmed()
        g = self.current_goal()
        rl.append(t=round(self.t, 9), x=float(self.pos[0]), y=float(self.pos[1]), heading=self.heading,
                  speed=self.speed, vx=float(self.vel[0]), vy=float(self.vel[1]), mode=self.mode.mode,
                  fs=int(self._last_fs), dyn=int(self._last_dyn), power=power, energy=energy,
                  goal_idx=self.goal_idx, goal_x=float(g[0]), goal_y=float(g[1]), n_detected=n_detected,
                  min_agent_dist=min_d, deviation=self.ref.deviation(self.pos), plan_id=self.active_plan_id,
                  dwell=int(dwell), agents=format_points(agents),
                  tracks=format_points([tr.position for tr in conf], [tr.id for tr in conf]))

    # --- the loop ---

    def _plan(self, root: RobotState, conf) -> Plan:
        goal = local_goal(self.ref, root.xy, self.s_lo, self.s_goal())
        if conf:
            pos = np.array([tr.position for tr in conf])
            vel = np.array([tr.velocity for tr in conf])
            lead = root.t - self.t
            tracks = (pos + lead * vel, vel)
        else:
            tracks = ()
        occ = self._occupancy(self.sc.run.robot_radius)
        if self.sc.planner.planner == "mcts":
            seed = int(self.plan_rng.integers(2 ** 31 - 1))
            return mcts_plan(root, goal, tracks, occ, self.actions, self.cost_params, seed, self.sc.world.bounds)
        return pf_plan(root, goal, tracks, occ, self.cost_params)

    def step(self, rl: RunLog):
        sc = self.sc
        dt = DT
        pose = (float(self.pos[0]), float(self.pos[1]), self.heading)
        near = self._nearby_agents()
        det = sense(near, pose, sc.detection, self.sense_rng)
        self.tracks.associate_update(det, self.t)
        conf = [tr for tr in self.tracks.confirmed()
                if math.dist(tr.position, self.pos) <= SENSING_RANGE]
        conf_xy = np.array([tr.position for tr in conf]).reshape(-1, 2)
        # agents detected: distinct true agents seen within the framework radius this tick
        seen = np.unique(det.source[det.source >= 0])
        n_detected = int(np.count_nonzero(np.hypot(*(near[seen] - self.pos).T) <= FRAMEWORK_RADIUS)) if len(seen) else 0

        v = self.speed
        agents = self._nearby_agents(2.0 + v + self.zone_offset + 1.0)
        occ_raw = self._occupancy(0.0)
        cells = occ_raw.centres() if occ_raw is not None else np.zeros((0, 2))
        fs = False
        for h in {self.heading, self.travel_dir}:
            p = (pose[0], pose[1], h)
            fs = fs or fs_check(agents, p, v, self.zone_offset) or fs_check(cells, p, v)
        dyn = False
        if sc.planner.planner != "fs":
            dyn = (dynamic_area_check(conf_xy, (), pose, v, self.zone_offset)
                   or dynamic_area_check((), cells, pose, v))
        self._last_fs, self._last_dyn = fs, dyn

        dwelling = self.dwell_until is not None
        prev_mode = self.mode.mode
        self.mode = select_mode(self.mode, fs, dyn, self.t, sc.run.latch_s)
        if self.mode.mode != DYNAMIC:
            self.plan = None

        cmd = VelocityCommand()
        if dwelling:
            pass
        elif self.mode.mode == FAILSAFE:
            pass
        elif self.mode.mode == LONG_TERM:
            cmd = pure_pursuit_step(self.state(), self.ref, dt, 0.0, sc.run.cruise, self.s_lo, self.s_goal())
        else:
            cmd = self._dynamic_command(conf, prev_mode)

        self._integrate(cmd, dt)
        self._advance_progress()
        power = self._power()
        self._record(rl, power, power * dt, n_detected, dwelling)

    def _dynamic_command(self, conf, prev_mode) -> VelocityCommand:
        sc = self.sc
        dt = DT
        robot = self.state()
        fresh = self.plan is None or prev_mode != DYNAMIC
        if fresh:
            s_hint = self.ref.project(self.pos, self.s_lo, self.s_goal())[0]
            root = slow_for_planning(robot, self.travel_dir, sc.run.delay_s, path=None, s_hint=s_hint)
            root = RobotState(root.x, root.y, robot.heading, root.speed, self.t + dt)
            slow = 0.5 * robot.speed
            cmd = VelocityCommand()
            if robot.speed > 1e-6:
                u = self.vel / robot.speed
                cmd = VelocityCommand(float(u[0] * slow), float(u[1] * slow), 0.0)
        else:
            k = int(np.argmin(np.abs(self.plan.t - (self.t + dt))))
            if abs(self.plan.t[k] - (self.t + dt)) > 1e-6:
                cmd = VelocityCommand()
                root = RobotState(robot.x, robot.y, robot.heading, 0.0, self.t + dt)
            else:
                cmd = plan_command(robot, self.plan.xy[k], dt, sc.run.v_max)
                root = RobotState(float(self.plan.xy[k, 0]), float(self.plan.xy[k, 1]), float(self.plan.heading[k]),
                                  float(self.plan.speed[k]), self.t + dt)
        try:
            new_plan = self._plan(root, conf)
            self.plan_id += 1
        except Exception as exc:  # a planner failure must never end the run
            self.failures += 1
            log.warning("planner failure at t=%.1f: %s", self.t, exc)
            new_plan = Plan.stop(root, self.cost_params.horizon, dt)
        self.plan = new_plan
        self.active_plan_id = self.plan_id
        return cmd

    def _integrate(self, cmd: VelocityCommand, dt: float):
        pos_old = self.pos.copy()
        target = np.array([cmd.vx, cmd.vy])
        dv = target - self.vel
        n = math.hypot(*dv)
        lim = ACCEL * dt
        if n > lim:
            dv *= lim / n
        self.vel = self.vel + dv
        if math.hypot(*self.vel) < 1e-9:
            self.vel[:] = 0.0
        self.pos = self.pos + self.vel * dt
        omega = float(np.clip(cmd.omega, -W_MAX, W_MAX))
        self.heading = float((self.heading + omega * dt + math.pi) % (2 * math.pi) - math.pi)
        for k in range(SUB_STEPS):
            frac = k / SUB_STEPS  # the robot's position at the start of the sub-step
            rp = pos_old + frac * (self.pos - pos_old)
            robot = crowd_mod.RobotDisc((float(rp[0]), float(rp[1])), (float(self.vel[0]), float(self.vel[1])),
                                        self.sc.run.robot_radius)
            if len(self.crowd):
                crowd_mod.step(self.crowd, robot, crowd_mod.SUB_DT, self.crowd_rng)
        self.t = round(self.t + dt, 9)

    def _power(self) -> float:
        v = self.speed
        slope = 0.0
        if v > 1e-9:
            try:
                slope = self.sc.world.slope_along(self.pos, self.travel_dir, SLOPE_STEP)
            except ValueError:
                slope = 0.0
        return instantaneous_power(v, slope, self.sc.energy)

    def _advance_progress(self):
        if self.finished:
            return
        s, _ = self.ref.project(self.pos, self.s_lo, self.s_goal())
        self.s_lo = max(self.s_lo, s - PROGRESS_SLACK)
        if self.dwell_until is not None:
            if self.t >= self.dwell_until - 1e-9:
                self.dwell_until = None
                self.s_lo = self.s_goal()
                self.goal_idx += 1
                if self.goal_idx >= len(self.offline.goals):
                    self.goal_idx = len(self.offline.goals) - 1
                    self.finished = True
            return
        if waypoint_arrival(self.pos, self.current_goal(), self.offline.accuracy[self.goal_idx]):
            self.dwell_until = self.t + self.sc.run.dwell_s
            if self.sc.run.dwell_s <= 0:
                self.dwell_until = self.t
                self._advance_progress()

    def run(self) -> RunLog:
        sc = self.sc
        rl = RunLog(meta={"planner": sc.planner.planner, "seed": sc.run.seed, "dt": f"{DT:.3f}",
                          "scenario": sc.source or "-"},
                    goals=self.offline.goals.copy(), accuracy=self.offline.accuracy.copy(),
                    tour=self.offline.tour.polyline.copy())
        self._last_fs = self._last_dyn = False
        self._record(rl, instantaneous_power(0.0, 0.0, sc.energy), 0.0, 0, False)
        n_ticks = int(math.floor(sc.run.duration / DT + 1e-9))
        for _ in range(n_ticks):
            if self.finished:
                break
            self.step(rl)
        rl.meta["finished"] = int(self.finished)
        rl.meta["planner_failures"] = self.failures
        return rl


def run_scenario(scenario: Scenario, offline: OfflinePlan | None = None) -> RunLog:
    """Plan the tour once and simulate until every goal is visited or time runs out."""
    return Simulation(scenario, offline).run()

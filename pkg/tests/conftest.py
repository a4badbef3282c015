import numpy as np
import pytest

from hiernav.runlog import RunLog


def make_log(t, x, y, energy=None, n_detected=None, goal=(100.0, 0.0), dwell=None, agents=None, speed=None):
    """RunLog from bare columns; the other columns get neutral values."""
    n = len(t)
    energy = np.zeros(n) if energy is None else energy
    n_detected = np.zeros(n, int) if n_detected is None else n_detected
    dwell = np.zeros(n, int) if dwell is None else dwell
    agents = [""] * n if agents is None else agents
    speed = np.ones(n) if speed is None else speed
    log = RunLog(meta={"seed": 0}, goals=np.array([goal], float), accuracy=np.array([1.0]))
    for k in range(n):
        log.append(t=float(t[k]), x=float(x[k]), y=float(y[k]), heading=0.0, speed=float(speed[k]), vx=0.0, vy=0.0,
                   mode="nominal", fs=0, dyn=0, power=0.0, energy=float(energy[k]), goal_idx=0,
                   goal_x=float(goal[0]), goal_y=float(goal[1]), n_detected=int(n_detected[k]),
                   min_agent_dist=float("inf"), deviation=0.0, plan_id=0, dwell=int(dwell[k]), agents=agents[k],
                   tracks="")
    return log


@pytest.fixture
def log_factory():
    return make_log

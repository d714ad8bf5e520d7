"""Acceleration-limited unicycle dynamics and footprint collision checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Pose2D, rot2
from ..planner import footprint_clearances, integrate_twist
from .world import Cylinder


@dataclass(frozen=True)
class RobotState:
    pose: Pose2D
    v: float = 0.0
    w: float = 0.0


def _toward(current, target, max_delta, limit):
    value = min(max(target, current - max_delta), current + max_delta)
    return min(max(value, -limit), limit)


def step_dynamics(state, cmd, limits, dt):
    """Move velocities toward ``cmd`` within acceleration and speed limits, then integrate."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = _toward(state.v, cmd.v, limits.a_v_max * dt, limits.v_max)
    w = _toward(state.w, cmd.w, limits.a_w_max * dt, limits.w_max)
    p = state.pose
    x, y, h = integrate_twist(p.x, p.y, p.heading, v, w, dt)
    return RobotState(Pose2D(float(x), float(y), float(h)), v, w)


def body_corners(pose, body):
    """Footprint corners in the world frame, counter-clockwise, shape (4, 2)."""
    hw = body.W / 2.0
    local = np.array(
        [[-hw, -body.L_rear], [hw, -body.L_rear], [hw, body.L_front], [-hw, body.L_front]]
    )
    return pose.to_world(local)


def _rect_box_gap(pose, body, box):
    """Separating distance along the SAT axes; <= 0 means overlap."""
    body_pts = body_corners(pose, body)
    box_pts = box.corners
    R = rot2(pose.heading)
    axes = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), R[:, 0], R[:, 1]]
    gap = -math.inf
    for a in axes:
        p1, p2 = body_pts @ a, box_pts @ a
        gap = max(gap, p2.min() - p1.max(), p1.min() - p2.max())
    return gap


def obstacle_clearance(world, pose, body):
    """Smallest gap between the footprint and any obstacle tall enough to hit the body.

    Cylinder gaps are exact; box gaps are the SAT separation, which is exact
    for overlap detection and a lower bound on the true distance otherwise.
    """
    best = math.inf
    for o in world.obstacles:
        if not o.spans(0.0, body.h_robot):
            continue
        if isinstance(o, Cylinder):
            local = pose.to_robot(np.array([o.x, o.y]))
            gap = float(footprint_clearances(local, body)) - o.radius
        else:
            gap = _rect_box_gap(pose, body, o)
        best = min(best, gap)
    return best


def out_of_bounds(world, pose, body):
    x0, y0, x1, y1 = world.bounds
    c = body_corners(pose, body)
    return bool(np.any(c[:, 0] < x0) or np.any(c[:, 0] > x1) or np.any(c[:, 1] < y0) or np.any(c[:, 1] > y1))


def check_collision(world, pose, body):
    """True when the footprint overlaps an obstacle or leaves the world bounds."""
    return obstacle_clearance(world, pose, body) < 0.0 or out_of_bounds(world, pose, body)

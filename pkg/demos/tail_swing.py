"""Why the planner needs the real footprint: turning next to a wall.

Two bodies of equal width differ only in how far the chassis extends behind
the drive axle.  A wall runs along the robot's right side, 0.14 m from the
chassis, and the goal is behind on the left.  Turning left swings the rear
corner towards the wall.  The symmetric robot can turn at any sampled rate;
the long-rear robot only at the slowest ones.

    python demos/tail_swing.py
"""

import math

import numpy as np

from crossnav.geometry import DynamicLimits, RobotBody
from crossnav.planner import Observation, PlannerConfig, plan, safe_command_mask
from crossnav.scan import ScanConfig, project_to_scan

cfg = PlannerConfig()
limits = DynamicLimits(0.5, math.pi / 4, 1.0, math.pi)
ys = np.linspace(-1.5, 1.5, 301)
wall = np.column_stack([np.full_like(ys, 0.34), ys, np.full_like(ys, 0.3)])
scan = project_to_scan(wall, ScanConfig(-math.pi, math.pi, 720, 10.0))

for name, body in (("symmetric (0.20 / 0.20)", RobotBody(0.20, 0.20, 0.40)),
                   ("long rear (0.15 / 0.45)", RobotBody(0.15, 0.45, 0.40))):
    obs = Observation(scan, (-2.0, -2.0), (0.0, 0.0), limits, body)
    V, W, safe = safe_command_mask(obs, cfg)
    left = (V == 0) & (W > 0)
    right = (V == 0) & (W < 0)
    cmd = plan(obs, cfg)
    print(f"{name}: in-place turns safe: left {int(safe[left].sum())}/{int(left.sum())}, "
          f"right {int(safe[right].sum())}/{int(right.sum())}; "
          f"chosen v={cmd.v:.2f} m/s, w={cmd.w:+.2f} rad/s")

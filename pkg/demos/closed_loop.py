"""One cylinder-field episode with ground-truth and with calibrated depth.

Writes two SVG trajectory plots to the directory given on the command line
(default: ./demo_out).

    python demos/closed_loop.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from crossnav.depth import DisparityDistortion
from crossnav.embodiment import PRESETS
from crossnav.plotting import emit_trajectory_plot
from crossnav.sim import EpisodeConfig, dijkstra_path_length, generate_scenario, run_episode
from crossnav.sim.markers import calibrate_in_sim

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)
sim = PRESETS["sim"]

world = generate_scenario(seed=7, density=0.3, body=sim.body, max_path_ratio=1.3)
L = dijkstra_path_length(world, sim.body)
print(f"{len(world.obstacles)} obstacles, shortest path {L:.2f} m "
      f"(straight line {world.straight_line_distance:.2f} m)")

noise = DisparityDistortion(2.0, 0.1, 0.01, seed=7)
calib = calibrate_in_sim(sim.cameras[0].intr, noise, np.random.default_rng(7))
runs = {
    "ground_truth": EpisodeConfig(sim, timeout_s=60, lidar_ring=True),
    "calibrated": EpisodeConfig(sim.with_calibration([(calib.s1, calib.s2)]), timeout_s=60,
                                distortion=noise, use_ground_truth_depth=False, lidar_ring=True),
}
for name, cfg in runs.items():
    res = run_episode(world, cfg)
    outcome = "success" if res.S else "collision" if res.C else "timeout"
    path = emit_trajectory_plot(res, world, out / f"{name}.svg", sim.body, name)
    print(f"{name:>12}: {outcome} after {res.T_act:.1f} s, min clearance {res.min_clearance:.2f} m -> {path}")

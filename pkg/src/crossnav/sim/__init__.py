"""Kinematic simulator: worlds, rendering, dynamics and closed-loop episodes."""

from .dynamics import RobotState, check_collision, obstacle_clearance, step_dynamics
from .episode import EpisodeConfig, EpisodeResult, default_scan_config, run_episode, sense
from .grid import dijkstra_path_length, occupancy_grid
from .render import camera_world_pose, ground_truth_scan, render_depth
from .world import Box, Cylinder, World, generate_scenario, read_scenario, write_scenario

__all__ = [
    "Box",
    "Cylinder",
    "EpisodeConfig",
    "EpisodeResult",
    "RobotState",
    "World",
    "camera_world_pose",
    "check_collision",
    "default_scan_config",
    "dijkstra_path_length",
    "generate_scenario",
    "ground_truth_scan",
    "obstacle_clearance",
    "occupancy_grid",
    "read_scenario",
    "render_depth",
    "run_episode",
    "sense",
    "step_dynamics",
    "write_scenario",
]

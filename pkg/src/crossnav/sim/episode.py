"""Closed-loop episodes: render, (distort, correct), scan, plan, step."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..depth import DisparityDistortion, distort_to_relative
from ..kvfile import read_kv
from ..planner import Observation, SamplingPlanner, goal_reached
from ..scan import ScanConfig, VirtualScan, camera_coverage, merge_scans, metric_to_scan, visual_to_scan
from .dynamics import RobotState, check_collision, obstacle_clearance, step_dynamics
from .render import camera_world_pose, ground_truth_scan, render_depth


@dataclass(frozen=True, eq=False)
class EpisodeConfig:
    embodiment: object
    dt: float = 0.1
    timeout_s: float = 60.0
    distortion: DisparityDistortion | None = None
    use_ground_truth_depth: bool = True
    seed: int = 0
    goal_tolerance: float = 0.3
    lidar_ring: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.timeout_s > 0:
            raise ValueError("timeout_s must be positive")


@dataclass(frozen=True, eq=False)
class EpisodeResult:
    S: int
    C: int
    O: int
    T_act: float
    trajectory: np.ndarray  # rows of (t, x, y, heading)
    min_clearance: float
    error: str = ""

    def __post_init__(self):
        if self.S + self.C + self.O != 1:
            raise ValueError("exactly one of S, C, O must be set")


def default_scan_config(embodiment, resolution_deg=0.5, range_max=10.0, h_min=0.05, stride=2):
    n = int(round(360.0 / resolution_deg))
    return ScanConfig(-math.pi, math.pi, n, range_max, h_min, embodiment.body.h_robot, stride)


def read_episode_config(path, embodiment, seed=0):
    """Episode settings from a key-value file.

    Keys (all optional): ``dt timeout_s goal_tolerance lidar_ring
    use_ground_truth_depth s1_true s2_true noise_sigma``.  Distortion is
    enabled when ``use_ground_truth_depth = false``.
    """
    kv = read_kv(path)
    use_gt = kv.bool("use_ground_truth_depth", True)
    distortion = None
    if not use_gt:
        distortion = DisparityDistortion(
            kv.float("s1_true", 1.0), kv.float("s2_true", 0.0), kv.float("noise_sigma", 0.0), seed
        )
    return EpisodeConfig(
        embodiment,
        dt=kv.float("dt", 0.1),
        timeout_s=kv.float("timeout_s", 60.0),
        distortion=distortion,
        use_ground_truth_depth=use_gt,
        seed=seed,
        goal_tolerance=kv.float("goal_tolerance", 0.3),
        lidar_ring=kv.bool("lidar_ring", False),
    )


def frame_rng(seed, step, camera):
    return np.random.default_rng([int(seed), int(step), int(camera)])


def sense(world, pose, cfg, scan_cfg, step=0):
    """Merged virtual scan from every camera (plus the optional lidar ring)."""
    scans = []
    covered = np.zeros(scan_cfg.num_bins, dtype=bool)
    for i, rig in enumerate(cfg.embodiment.cameras):
        depth = render_depth(world, camera_world_pose(pose, rig.ext), rig.intr, scan_cfg.pixel_stride)
        if cfg.use_ground_truth_depth or cfg.distortion is None:
            scans.append(metric_to_scan(depth, rig.intr, rig.ext, scan_cfg))
        else:
            if rig.calib is None:
                raise ValueError(f"camera {rig.name or i} has no (s1, s2) calibration")
            rel = distort_to_relative(depth, cfg.distortion, frame_rng(cfg.seed, step, i))
            scans.append(visual_to_scan(rel, rig.calib, rig.intr, rig.ext, scan_cfg))
        covered |= camera_coverage(rig.intr, rig.ext, scan_cfg)
    if cfg.lidar_ring:
        ring = ground_truth_scan(world, pose, scan_cfg).ranges.copy()
        ring[covered] = scan_cfg.range_max
        scans.append(VirtualScan(ring, scan_cfg))
    if not scans:
        return VirtualScan.empty(scan_cfg)
    return merge_scans(scans)


def run_episode(world, cfg, planner=None, scan_cfg=None):
    """Run one episode until goal, collision or timeout."""
    planner = planner or SamplingPlanner()
    emb = cfg.embodiment
    scan_cfg = scan_cfg or default_scan_config(emb)
    state = RobotState(world.start)
    traj = [(0.0, state.pose.x, state.pose.y, state.pose.heading)]
    min_clr = obstacle_clearance(world, state.pose, emb.body)
    step = 0
    flags = None
    error = ""
    while flags is None:
        if goal_reached(state.pose, world.goal, cfg.goal_tolerance):
            flags = (1, 0, 0)
            break
        try:
            scan = sense(world, state.pose, cfg, scan_cfg, step)
            goal_local = state.pose.to_robot(np.asarray(world.goal))
            obs = Observation(scan, tuple(goal_local), (state.v, state.w), emb.limits, emb.body)
            cmd = planner(obs)
        except Exception as exc:  # any pipeline failure ends the episode
            error = f"{type(exc).__name__}: {exc}"
            flags = (0, 0, 1)
            break
        state = step_dynamics(state, cmd, emb.limits, cfg.dt)
        step += 1
        t = round(step * cfg.dt, 9)
        traj.append((t, state.pose.x, state.pose.y, state.pose.heading))
        min_clr = min(min_clr, obstacle_clearance(world, state.pose, emb.body))
        if check_collision(world, state.pose, emb.body):
            flags = (0, 1, 0)
        elif goal_reached(state.pose, world.goal, cfg.goal_tolerance):
            flags = (1, 0, 0)
        elif t > cfg.timeout_s + 1e-9:
            flags = (0, 0, 1)
    return EpisodeResult(*flags, T_act=round(step * cfg.dt, 9), trajectory=np.array(traj),
                         min_clearance=float(min_clr), error=error)

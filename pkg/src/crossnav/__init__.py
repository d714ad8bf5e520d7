"""Embodiment-aware visual navigation: metric depth from relative depth,
virtual laser scans, footprint-aware planning and a kinematic benchmark."""

__version__ = "0.1.0"

from .benchmark import aggregate, metric_score, optimal_time
from .calibration import apply_scale_correction, calibrate, estimate_marker_pose, solve_ridge
from .depth import DepthImage, DisparityDistortion, eval_depth, load_pfm, save_pfm
from .embodiment import PRESETS, CameraRig, EmbodimentProfile, read_embodiment
from .geometry import CameraExtrinsics, CameraIntrinsics, DynamicLimits, Pose2D, RobotBody
from .planner import Observation, PlannerConfig, SamplingPlanner, VelocityCommand, plan
from .scan import ScanConfig, VirtualScan, merge_scans, visual_to_scan
from .vln import ArrivalDetector, RegionConfidence, command_from_confidence, to_world

__all__ = [
    "PRESETS",
    "ArrivalDetector",
    "CameraExtrinsics",
    "CameraIntrinsics",
    "CameraRig",
    "DepthImage",
    "DisparityDistortion",
    "DynamicLimits",
    "EmbodimentProfile",
    "Observation",
    "PlannerConfig",
    "Pose2D",
    "RegionConfidence",
    "RobotBody",
    "SamplingPlanner",
    "ScanConfig",
    "VelocityCommand",
    "VirtualScan",
    "aggregate",
    "apply_scale_correction",
    "calibrate",
    "command_from_confidence",
    "estimate_marker_pose",
    "eval_depth",
    "load_pfm",
    "merge_scans",
    "metric_score",
    "optimal_time",
    "plan",
    "read_embodiment",
    "save_pfm",
    "solve_ridge",
    "to_world",
    "visual_to_scan",
]

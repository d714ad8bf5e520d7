"""Embodiment profiles: body, dynamic limits and camera rig, plus file I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .calibration import read_calibration
from .errors import FormatError
from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    DynamicLimits,
    RobotBody,
    read_camera_file,
)
from .kvfile import read_kv

DEFAULT_RESOLUTION = (320, 240)
FRONT_HFOV_DEG = 75.0


@dataclass(frozen=True, eq=False)
class CameraRig:
    intr: CameraIntrinsics
    ext: CameraExtrinsics
    calib: tuple | None = None  # (s1, s2) for relative-depth input
    name: str = ""


@dataclass(frozen=True, eq=False)
class EmbodimentProfile:
    body: RobotBody
    limits: DynamicLimits
    cameras: tuple = field(default=())
    name: str = ""

    def with_calibration(self, calibs):
        rigs = tuple(replace(rig, calib=tuple(c)) for rig, c in zip(self.cameras, calibs))
        return replace(self, cameras=rigs)

    def with_v_max(self, v_max):
        lim = self.limits
        return replace(self, limits=DynamicLimits(v_max, lim.w_max, lim.a_v_max, lim.a_w_max))


def front_camera(z_cam, forward=0.0, pitch=0.0, hfov_deg=FRONT_HFOV_DEG, resolution=DEFAULT_RESOLUTION):
    w, h = resolution
    return CameraRig(
        CameraIntrinsics.from_fov(w, h, hfov_deg),
        CameraExtrinsics.mounted(z_cam, pitch=pitch, forward=forward),
        name="front",
    )


def ring_cameras(z_cam, forward=0.0, count=3, resolution=DEFAULT_RESOLUTION):
    """``count`` evenly yawed cameras whose fields of view tile 360 degrees."""
    w, h = resolution
    hfov = 360.0 / count
    rigs = []
    for i in range(count):
        yaw = 2.0 * math.pi * i / count
        rigs.append(
            CameraRig(
                CameraIntrinsics.from_fov(w, h, hfov),
                CameraExtrinsics.mounted(z_cam, yaw=yaw, forward=forward),
                name=f"cam{i}",
            )
        )
    return tuple(rigs)


# Real-robot limits used for every DMR preset.
REAL_LIMITS = dict(w_max=math.pi / 4, a_v_max=1.0, a_w_max=math.pi)


def _dmr(name, lf, lr, w, z_cam, x_cam, n_cams, v_max, h_robot):
    body = RobotBody(lf, lr, w, h_robot)
    limits = DynamicLimits(v_max, **REAL_LIMITS)
    if n_cams == 3:
        cams = ring_cameras(z_cam, forward=x_cam)
    else:
        cams = (front_camera(z_cam, forward=x_cam),)
    return EmbodimentProfile(body, limits, cams, name)


# Body/camera geometry per robot config; robot heights are not published and
# are set a little above the camera.
PRESETS = {
    "dmr1": _dmr("dmr1", 0.20, 0.20, 0.40, 0.42, 0.03, 3, 0.5, 0.50),
    "dmr2": _dmr("dmr2", 0.15, 0.45, 0.40, 0.42, 0.03, 3, 0.5, 0.50),
    "dmr3": _dmr("dmr3", 0.40, 0.20, 0.40, 0.42, 0.03, 3, 0.5, 0.50),
    "dmr4": _dmr("dmr4", 0.20, 0.20, 1.00, 0.42, 0.03, 3, 0.5, 0.50),
    "dmr5": _dmr("dmr5", 0.18, 0.20, 0.40, 0.52, -0.13, 3, 0.5, 0.60),
    "dmr6": _dmr("dmr6", 0.20, 0.20, 0.40, 0.20, 0.15, 1, 0.5, 0.30),
    "dmr7": _dmr("dmr7", 0.35, 0.35, 0.30, 0.60, 0.00, 1, 0.6, 0.70),
    # simulation benchmark robot (front camera; the rest of the ring comes from a lidar)
    "sim": EmbodimentProfile(
        RobotBody(0.21, 0.21, 0.5, 0.5),
        DynamicLimits(0.5, math.pi / 2, 3.0, 3.0),
        (front_camera(0.42),),
        "sim",
    ),
}


def read_embodiment(path):
    """Key-value embodiment file; camera/calibration paths are relative to it.

    Keys: ``L_front L_rear W h_robot v_max w_max a_v_max a_w_max``,
    ``cameras = [a.cam, ...]`` and optionally ``calibrations = [a.calib, ...]``.
    """
    path = Path(path)
    kv = read_kv(path)
    body = RobotBody(kv.float("L_front"), kv.float("L_rear"), kv.float("W"), kv.float("h_robot"))
    limits = DynamicLimits(
        kv.float("v_max"), kv.float("w_max"), kv.float("a_v_max"), kv.float("a_w_max")
    )
    cam_files = kv.list("cameras", [])
    calib_files = kv.list("calibrations", [])
    if calib_files and len(calib_files) != len(cam_files):
        raise FormatError(f"{path}: 'calibrations' must list one file per camera")
    rigs = []
    for i, name in enumerate(cam_files):
        intr, ext = read_camera_file(path.parent / name)
        calib = read_calibration(path.parent / calib_files[i]) if calib_files else None
        rigs.append(CameraRig(intr, ext, calib, Path(name).stem))
    return EmbodimentProfile(body, limits, tuple(rigs), kv.str("name", path.stem))

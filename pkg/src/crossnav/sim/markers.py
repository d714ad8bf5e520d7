"""Synthetic marker boards for calibration tests and in-simulation calibration."""

from __future__ import annotations

import math

import numpy as np

from ..calibration import DEFAULT_LAMBDA, MarkerObservation, calibrate, marker_object_points
from ..depth import METRIC, DepthImage, distort_to_relative
from ..geometry import project_points, rodrigues, rodrigues_inv, rot_x

# marker frame y points up, camera y points down: flip about x to face the camera
FACING = rot_x(math.pi)


def board_depth(intr, R, t, half_extent):
    """Rectified metric depth of a square planar board centred at the marker.

    Pixels whose ray misses the board are invalid.
    """
    n = R[:, 2]
    u, v = np.meshgrid(np.arange(intr.width, dtype=float), np.arange(intr.height, dtype=float))
    rays = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        Z = float(n @ t) / (rays @ n)
        local = (rays * Z[..., None] - t) @ R  # board-frame coordinates
    ok = (Z > 0) & (np.abs(local[..., 0]) <= half_extent) & (np.abs(local[..., 1]) <= half_extent)
    return DepthImage(np.where(ok, Z, np.nan), METRIC, ok)


def marker_scene(intr, rvec, tvec, size, board_scale=2.0, corner_noise=0.0, rng=None,
                 image_id="img", marker_id=0):
    """Metric depth of the board plus the (optionally noisy) marker observation."""
    R = rodrigues(rvec)
    t = np.asarray(tvec, dtype=float)
    corners = project_points(intr, marker_object_points(size) @ R.T + t)
    if corner_noise > 0:
        corners = corners + corner_noise * rng.standard_normal(corners.shape)
    depth = board_depth(intr, R, t, board_scale * size / 2.0)
    return depth, MarkerObservation(image_id, marker_id, size, corners)


def random_marker_pose(rng, intr, depth, size, max_tilt=math.radians(30.0), margin=4.0):
    """Random facing pose at ``depth`` with every corner at least ``margin`` px inside the image."""
    for _ in range(1000):
        tilt = rng.uniform(-max_tilt, max_tilt, size=3)
        tilt[2] *= 2.0  # in-plane spin is free
        R = rodrigues(tilt) @ FACING
        x_lim = depth * (intr.width / 2.0 - margin) / intr.fx
        y_lim = depth * (intr.height / 2.0 - margin) / intr.fy
        t = np.array([rng.uniform(-0.6, 0.6) * x_lim, rng.uniform(-0.6, 0.6) * y_lim, depth])
        P = marker_object_points(size) @ R.T + t
        if np.any(P[:, 2] <= 0.05):
            continue
        c = project_points(intr, P)
        inside = (
            (c[:, 0] >= margin) & (c[:, 0] <= intr.width - 1 - margin)
            & (c[:, 1] >= margin) & (c[:, 1] <= intr.height - 1 - margin)
        )
        if inside.all():
            return rodrigues_inv(R), t
    raise RuntimeError(f"could not place a {size} m marker at {depth} m in view")


def marker_dataset(intr, rng, n_images=8, depth_range=(0.5, 4.0), size=0.3, corner_noise=0.0):
    """Metric board images spanning ``depth_range`` with one marker each."""
    lo, hi = depth_range
    depths = np.linspace(lo, hi, n_images)
    out = []
    for i, z in enumerate(depths):
        rvec, tvec = random_marker_pose(rng, intr, float(z), size)
        out.append(marker_scene(intr, rvec, tvec, size, corner_noise=corner_noise, rng=rng,
                                image_id=f"img{i:03d}", marker_id=i))
    return out


def calibrate_in_sim(intr, distortion, rng, n_images=8, depth_range=(0.5, 4.0), size=0.3,
                     corner_noise=0.0, lam=DEFAULT_LAMBDA, dataset=None):
    """Distort synthetic board depth with ``distortion`` and recover ``(s1, s2)``."""
    dataset = dataset or marker_dataset(intr, rng, n_images, depth_range, size, corner_noise)
    images = [(distort_to_relative(Z, distortion, rng), [obs]) for Z, obs in dataset]
    return calibrate(images, intr, lam)

"""Metric depth image -> height-filtered virtual 2D laser scan in the robot frame."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .calibration import apply_scale_correction
from .depth import METRIC
from .errors import ConfigMismatchError, FormatError, NumericParseError
from .geometry import backproject_pixels, cam_to_robot, wrap_angles
from .kvfile import read_kv

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ScanConfig:
    """Angular binning and height band of a virtual scan.

    Bin ``k`` covers bearings ``[angle_min + k*dtheta, angle_min + (k+1)*dtheta)``
    with bearings measured as ``atan2(y, x)`` in the robot frame.
    """

    angle_min: float = -math.pi
    angle_max: float = math.pi
    num_bins: int = 720
    range_max: float = 10.0
    h_min: float = 0.05
    h_max: float = 0.5
    pixel_stride: int = 2

    def __post_init__(self):
        if not self.angle_min < self.angle_max:
            raise ValueError("angle_min must be below angle_max")
        if self.angle_max - self.angle_min > TWO_PI + 1e-12:
            raise ValueError("scan cannot span more than a full turn")
        if self.num_bins < 1:
            raise ValueError("num_bins must be at least 1")
        if not 0 <= self.h_min < self.h_max:
            raise ValueError("need 0 <= h_min < h_max")
        if not self.range_max > 0:
            raise ValueError("range_max must be positive")
        if self.pixel_stride < 1:
            raise ValueError("pixel_stride must be >= 1")

    @classmethod
    def sector(cls, center, width, resolution=math.radians(0.5), **kwargs):
        """Config spanning ``width`` radians around bearing ``center``."""
        n = max(1, int(round(width / resolution)))
        return cls(center - n * resolution / 2.0, center + n * resolution / 2.0, n, **kwargs)

    @property
    def dtheta(self):
        return (self.angle_max - self.angle_min) / self.num_bins

    @property
    def edges(self):
        return self.angle_min + np.arange(self.num_bins + 1) * self.dtheta

    @property
    def bin_centers(self):
        return self.angle_min + (np.arange(self.num_bins) + 0.5) * self.dtheta

    @property
    def full_circle(self):
        return abs(self.angle_max - self.angle_min - TWO_PI) < 1e-9

    def with_band(self, h_min, h_max):
        return ScanConfig(
            self.angle_min, self.angle_max, self.num_bins, self.range_max, h_min, h_max,
            self.pixel_stride,
        )

    def bin_index(self, theta):
        """Bin index of each bearing, or -1 when outside ``[angle_min, angle_max)``."""
        theta = np.asarray(theta, dtype=float)
        off = theta - self.angle_min
        wrap = (off < 0) | (off >= TWO_PI)
        if np.any(wrap):
            theta = np.where(wrap, self.angle_min + np.mod(off, TWO_PI), theta)
        k = np.searchsorted(self.edges, theta, side="right") - 1
        inside = (theta >= self.angle_min) & (theta < self.angle_max) & (k < self.num_bins)
        return np.where(inside, k, -1)


@dataclass(frozen=True, eq=False)
class VirtualScan:
    ranges: np.ndarray
    config: ScanConfig

    def __post_init__(self):
        r = np.array(self.ranges, dtype=float).reshape(-1)
        if r.shape[0] != self.config.num_bins:
            raise ValueError("ranges length must equal num_bins")
        if np.any(~(r > 0)) or np.any(r > self.config.range_max):
            raise ValueError("ranges must lie in (0, range_max]")
        r.setflags(write=False)
        object.__setattr__(self, "ranges", r)

    @classmethod
    def empty(cls, config):
        return cls(np.full(config.num_bins, config.range_max), config)

    @property
    def angles(self):
        return self.config.bin_centers

    def hit_mask(self):
        """Bins holding a return closer than ``range_max``."""
        return self.ranges < self.config.range_max

    def points(self, include_max=False):
        """Bin-centre Cartesian points (x right, y forward), shape (N, 2)."""
        keep = slice(None) if include_max else self.hit_mask()
        a = self.angles[keep]
        r = self.ranges[keep]
        return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)


def stride_pixels(width, height, stride):
    """Pixel centre coordinates on the stride grid, as flat ``(u, v)`` arrays."""
    us = np.arange(0, width, stride)
    vs = np.arange(0, height, stride)
    uu, vv = np.meshgrid(us, vs)
    return uu.ravel(), vv.ravel()


def depth_to_cloud(D, intr, ext, stride=1):
    """Back-project valid pixels on the stride grid into the robot frame, (N, 3)."""
    if D.kind != METRIC:
        raise ValueError("depth_to_cloud expects metric depth")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    sub_z = D.data[::stride, ::stride]
    sub_m = D.mask[::stride, ::stride]
    vv, uu = np.nonzero(sub_m)
    p_cam = backproject_pixels(intr, uu * stride, vv * stride, sub_z[vv, uu])
    return cam_to_robot(ext, p_cam)


def height_filter(cloud, h_min, h_max):
    """Keep points with ``h_min < z < h_max`` (strict on both sides)."""
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    z = cloud[:, 2]
    return cloud[(z > h_min) & (z < h_max)]


def project_to_scan(obstacles, cfg):
    """Per-bin minimum planar range of the obstacle points."""
    pts = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    ranges = np.full(cfg.num_bins, cfg.range_max)
    if len(pts):
        r = np.hypot(pts[:, 0], pts[:, 1])
        k = cfg.bin_index(np.arctan2(pts[:, 1], pts[:, 0]))
        keep = (k >= 0) & (r <= cfg.range_max) & (r > 0)
        np.minimum.at(ranges, k[keep], r[keep])
    return VirtualScan(ranges, cfg)


def merge_scans(scans):
    """Element-wise minimum of scans sharing one config."""
    scans = list(scans)
    if not scans:
        raise ValueError("nothing to merge")
    cfg = scans[0].config
    for s in scans[1:]:
        if s.config != cfg:
            raise ConfigMismatchError("cannot merge scans with different configs")
    return VirtualScan(np.minimum.reduce([s.ranges for s in scans]), cfg)


def metric_to_scan(D_metric, intr, ext, cfg):
    cloud = depth_to_cloud(D_metric, intr, ext, cfg.pixel_stride)
    return project_to_scan(height_filter(cloud, cfg.h_min, cfg.h_max), cfg)


def visual_to_scan(D_rel, calib, intr, ext, cfg):
    """Scale correction, back-projection, height filtering and scan projection."""
    s1, s2 = calib
    return metric_to_scan(apply_scale_correction(D_rel, s1, s2), intr, ext, cfg)


def camera_coverage(intr, ext, cfg):
    """Bins whose centre bearing falls inside the camera's horizontal field of view.

    Bearings are taken about the camera's own vertical axis, so the mask is
    approximate for cameras mounted away from the drive centre.
    """
    off = wrap_angles(cfg.bin_centers - ext.bearing)
    return np.abs(off) <= intr.hfov / 2.0


# --- scan dump ---------------------------------------------------------------


def write_scan(path, scan):
    cfg = scan.config
    lines = [
        "# virtual scan: bearings atan2(y, x) in the robot frame, ranges in meters",
        f"angle_min = {cfg.angle_min!r}",
        f"angle_max = {cfg.angle_max!r}",
        f"num_bins = {cfg.num_bins}",
        f"range_max = {cfg.range_max!r}",
    ]
    lines.extend(repr(float(r)) for r in scan.ranges)
    Path(path).write_text("\n".join(lines) + "\n")


def read_scan(path):
    header = {}
    ranges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            if "=" in body:
                key, value = (p.strip() for p in body.split("=", 1))
                header[key] = float(value)
            else:
                ranges.append(float(body))
        except ValueError:
            raise NumericParseError(f"{path}:{lineno}: cannot parse {line!r}") from None
    missing = {"angle_min", "angle_max", "num_bins", "range_max"} - header.keys()
    if missing:
        raise FormatError(f"{path}: scan header lacks {sorted(missing)}")
    cfg = ScanConfig(
        header["angle_min"], header["angle_max"], int(header["num_bins"]), header["range_max"]
    )
    if len(ranges) != cfg.num_bins:
        raise FormatError(f"{path}: expected {cfg.num_bins} ranges, found {len(ranges)}")
    return VirtualScan(np.array(ranges), cfg)


def read_scan_config(path, base=None):
    """:class:`ScanConfig` fields from a key-value file; absent keys keep ``base`` values."""
    kv = read_kv(path)
    base = base or ScanConfig()
    values = {}
    for f in fields(ScanConfig):
        if f.name in kv:
            values[f.name] = kv.int(f.name) if f.name in ("num_bins", "pixel_stride") else kv.float(f.name)
    return replace(base, **values)

"""Frames, pinhole projection, rotations and lens distortion.

Conventions used across the package:

* Camera optical frame: x right, y down, z forward (out of the lens).
* Robot frame: x right, y forward, z up, origin at the drive centre on the
  ground.  Bearings are ``atan2(y, x)`` so straight ahead is ``pi/2`` and
  angles grow towards the robot's left.
* World frame: x, y horizontal, z up.  A :class:`Pose2D` heading of 0 means
  the robot frame is aligned with the world frame (facing world +y); the
  pose maps robot coordinates to world ones as ``R(heading) @ p + (x, y)``.
* Pixel ``(u, v)`` addresses column ``u`` and row ``v``; integer values are
  pixel centres.

Extrinsics store the full camera->robot rotation, i.e. the fixed axis
permutation composed with the mounting pitch/yaw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    BehindCameraError,
    InvalidDepthError,
    InvalidRotationError,
    NonConvergenceError,
)
from .kvfile import read_kv, write_kv

# camera x -> robot x, camera y (down) -> robot -z, camera z -> robot y
BASE_PERMUTATION = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, -1.0, 0.0],
    ]
)

UNDISTORT_MAX_ITER = 50


def wrap_angle(angle):
    """Wrap to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def wrap_angles(angles):
    angles = np.asarray(angles, dtype=float)
    wrapped = np.remainder(angles + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)


def rot_x(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot2(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def skew(w):
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.max(np.abs(R.T @ R - np.eye(3))) <= tol and abs(np.linalg.det(R) - 1.0) <= tol
    )


def rodrigues(rvec):
    """Rotation vector (axis * angle) to rotation matrix."""
    r = np.asarray(rvec, dtype=float).reshape(3)
    theta = float(np.linalg.norm(r))
    if theta < 1e-12:
        return np.eye(3) + skew(r)
    k = skew(r / theta)
    return np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def rodrigues_inv(R, tol=1e-9):
    """Rotation matrix to rotation vector with angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise InvalidRotationError("matrix is not a proper rotation (R^T R != I or det != 1)")
    vee = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_t = float(np.linalg.norm(vee))
    cos_t = 0.5 * (np.trace(R) - 1.0)
    theta = math.atan2(sin_t, cos_t)
    if theta < 1e-12:
        return vee.copy()
    if sin_t > 1e-6 or cos_t > 0.0:
        return vee * (theta / sin_t)
    # near pi: the antisymmetric part vanishes, read the axis off the symmetric part
    sym = 0.5 * (R + R.T) - cos_t * np.eye(3)
    col = int(np.argmax(np.diag(sym)))
    axis = sym[:, col] / np.linalg.norm(sym[:, col])
    if axis @ vee < 0.0:
        axis = -axis
    return axis * theta


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    dist: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "dist", tuple(float(d) for d in self.dist))
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if len(self.dist) not in (4, 5):
            raise ValueError("distortion takes (k1, k2, p1, p2) or (k1, k2, p1, p2, k3)")

    @classmethod
    def from_fov(cls, width, height, hfov_deg, dist=(0.0, 0.0, 0.0, 0.0)):
        """Square-pixel intrinsics with the given horizontal field of view.

        The principal point sits at the image centre in pixel-centre
        coordinates, i.e. ``(width - 1) / 2``.
        """
        cx = (width - 1) / 2.0
        f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(f, f, cx, (height - 1) / 2.0, int(width), int(height), dist)

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def has_distortion(self):
        return any(d != 0.0 for d in self.dist)

    @property
    def hfov(self):
        """Horizontal field of view in radians, measured to the image edges."""
        left = math.atan((self.cx + 0.5) / self.fx)
        right = math.atan((self.width - 0.5 - self.cx) / self.fx)
        return left + right


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    """Camera->robot transform ``p_rob = rotation @ p_cam + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not is_rotation(R):
            raise InvalidRotationError("extrinsic rotation is not a proper rotation")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def mounted(cls, height, pitch=0.0, yaw=0.0, forward=0.0, lateral=0.0):
        """Camera at ``height`` above the drive centre, pitched down by ``pitch``.

        ``yaw`` turns the camera towards the robot's left; ``forward`` and
        ``lateral`` are the robot-frame y and x offsets.
        """
        R = rot_z(yaw) @ BASE_PERMUTATION @ rot_x(-pitch)
        return cls(R, np.array([lateral, forward, height]))

    @cached_property
    def rvec(self):
        return rodrigues_inv(self.rotation)

    @property
    def optical_axis(self):
        """Unit optical axis in the robot frame."""
        return self.rotation[:, 2].copy()

    @property
    def bearing(self):
        """Robot-frame bearing (atan2 convention) of the optical axis."""
        axis = self.optical_axis
        return math.atan2(axis[1], axis[0])


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def position(self):
        return np.array([self.x, self.y])

    @property
    def forward(self):
        """Unit vector of the robot's +y axis in the world frame."""
        return np.array([-math.sin(self.heading), math.cos(self.heading)])

    def to_world(self, points):
        """Robot-frame (N, 2) or (2,) points to world frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ rot2(self.heading).T + self.position

    def to_robot(self, points):
        pts = np.asarray(points, dtype=float)
        return (pts - self.position) @ rot2(self.heading)


@dataclass(frozen=True)
class RobotBody:
    """Cuboid footprint split at the drive centre, plus physical height."""

    L_front: float
    L_rear: float
    W: float
    h_robot: float = 0.5

    def __post_init__(self):
        if min(self.L_front, self.L_rear, self.W, self.h_robot) <= 0:
            raise ValueError("body dimensions must be strictly positive")

    @property
    def half_width(self):
        return self.W / 2.0

    @property
    def circumscribed_radius(self):
        return math.hypot(max(self.L_front, self.L_rear), self.W / 2.0)

    def scaled(self, factor):
        return RobotBody(
            self.L_front * factor, self.L_rear * factor, self.W * factor, self.h_robot
        )


@dataclass(frozen=True)
class DynamicLimits:
    v_max: float
    w_max: float
    a_v_max: float
    a_w_max: float

    def __post_init__(self):
        if min(self.v_max, self.w_max, self.a_v_max, self.a_w_max) <= 0:
            raise ValueError("dynamic limits must be strictly positive")


def distort_normalized(x, y, dist):
    """Apply the radial-tangential model to normalized coordinates."""
    k1, k2, p1, p2 = dist[:4]
    k3 = dist[4] if len(dist) > 4 else 0.0
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    return xd, yd


def _distortion_jacobian(x, y, dist):
    k1, k2, p1, p2 = dist[:4]
    k3 = dist[4] if len(dist) > 4 else 0.0
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    dradial = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2)
    dRdx = 2.0 * x * dradial
    dRdy = 2.0 * y * dradial
    j11 = radial + x * dRdx + 2.0 * p1 * y + 6.0 * p2 * x
    j12 = x * dRdy + 2.0 * p1 * x + 2.0 * p2 * y
    j21 = y * dRdx + 2.0 * p1 * x + 2.0 * p2 * y
    j22 = radial + y * dRdy + 6.0 * p1 * y + 2.0 * p2 * x
    return j11, j12, j21, j22


def undistort_normalized(xd, yd, dist, max_iter=UNDISTORT_MAX_ITER, tol=1e-10):
    """Invert :func:`distort_normalized` by Newton iteration."""
    xd = np.asarray(xd, dtype=float)
    yd = np.asarray(yd, dtype=float)
    if not any(d != 0.0 for d in dist):
        return xd.copy(), yd.copy()
    x, y = xd.copy(), yd.copy()
    trace = []
    for _ in range(max_iter):
        fx_, fy_ = distort_normalized(x, y, dist)
        ex, ey = fx_ - xd, fy_ - yd
        err = float(np.max(np.hypot(ex, ey))) if ex.size else 0.0
        trace.append(err)
        if err < 1e-15:
            break
        j11, j12, j21, j22 = _distortion_jacobian(x, y, dist)
        det = j11 * j22 - j12 * j21
        x = x - (j22 * ex - j12 * ey) / det
        y = y - (-j21 * ex + j11 * ey) / det
    fx_, fy_ = distort_normalized(x, y, dist)
    err = float(np.max(np.hypot(fx_ - xd, fy_ - yd))) if x.size else 0.0
    if not np.isfinite(err) or err >= tol:
        raise NonConvergenceError(
            f"undistortion did not converge (residual {err:.3e} after {max_iter} iterations)",
            trace,
        )
    return x, y


def undistort_pixel(intr, u, v):
    """Pixel to undistorted normalized image coordinates ``(x, y)``."""
    xd = (np.asarray(u, dtype=float) - intr.cx) / intr.fx
    yd = (np.asarray(v, dtype=float) - intr.cy) / intr.fy
    x, y = undistort_normalized(xd, yd, intr.dist)
    if x.ndim == 0:
        return np.array([float(x), float(y)])
    return np.stack([x, y], axis=-1)


def project_points(intr, points):
    """Project (N, 3) camera-frame points to (N, 2) pixels, distortion applied."""
    P = np.asarray(points, dtype=float).reshape(-1, 3)
    if np.any(P[:, 2] <= 0):
        raise BehindCameraError("cannot project a point at or behind the camera plane")
    x = P[:, 0] / P[:, 2]
    y = P[:, 1] / P[:, 2]
    xd, yd = distort_normalized(x, y, intr.dist)
    return np.stack([intr.fx * xd + intr.cx, intr.fy * yd + intr.cy], axis=-1)


def project_point(intr, p):
    return project_points(intr, p)[0]


def backproject_pixel(intr, u, v, Z):
    """Back-project an undistorted pixel with depth ``Z`` into the camera frame."""
    Z = float(Z)
    if not math.isfinite(Z) or Z <= 0:
        raise InvalidDepthError(f"depth must be finite and positive, got {Z}")
    return np.array([(u - intr.cx) * Z / intr.fx, (v - intr.cy) * Z / intr.fy, Z])


def backproject_pixels(intr, u, v, Z):
    """Vectorized :func:`backproject_pixel`; no validity checks."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    Z = np.asarray(Z, dtype=float)
    return np.stack([(u - intr.cx) * Z / intr.fx, (v - intr.cy) * Z / intr.fy, Z], axis=-1)


def cam_to_robot(ext, p_cam):
    """``R_ext @ p + t_ext`` for a (3,) point or an (N, 3) array."""
    p = np.asarray(p_cam, dtype=float)
    return p @ ext.rotation.T + ext.translation


# --- camera model file -------------------------------------------------------

CAMERA_FILE_HEADER = """\
camera model
fx, fy, cx, cy: pixels; width, height: pixels
dist: [k1, k2, p1, p2(, k3)] radial-tangential, unitless
ext_rvec: camera->robot rotation vector (radians)
ext_t: camera position in the robot frame [x right, y forward, z up] (meters)"""


def read_camera_file(path):
    kv = read_kv(path)
    intr = CameraIntrinsics(
        kv.float("fx"),
        kv.float("fy"),
        kv.float("cx"),
        kv.float("cy"),
        kv.int("width"),
        kv.int("height"),
        tuple(kv.floats("dist", [0.0, 0.0, 0.0, 0.0])),
    )
    ext = CameraExtrinsics(rodrigues(kv.floats("ext_rvec")), kv.floats("ext_t"))
    return intr, ext


def write_camera_file(path, intr, ext):
    write_kv(
        path,
        [
            ("fx", float(intr.fx)),
            ("fy", float(intr.fy)),
            ("cx", float(intr.cx)),
            ("cy", float(intr.cy)),
            ("width", int(intr.width)),
            ("height", int(intr.height)),
            ("dist", [float(d) for d in intr.dist]),
            ("ext_rvec", [float(r) for r in ext.rvec]),
            ("ext_t", [float(t) for t in ext.translation]),
        ],
        header=CAMERA_FILE_HEADER,
    )

"""Offline disparity scale/shift calibration from square markers, and online correction.

A relative-depth model is assumed to be affine in disparity::

    1 / Z = s1 * d_pred + s2

Calibration recovers ``(s1, s2)`` from the four corners of markers of known
size: each marker's pose (from its corner pixels) gives metric corner
depths, the relative depth image is sampled at the same pixels, and the
resulting ``[d_pred, 1] x = 1/z`` system is solved by ridge regression.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .depth import METRIC, RELATIVE, DepthImage
from .errors import (
    BehindCameraError,
    CalibrationSpreadWarning,
    DegenerateTargetError,
    EmptyCalibrationError,
    FormatError,
    IllConditionedError,
    IllConditionedWarning,
    InvalidSampleError,
    NonConvergenceError,
    NumericParseError,
    SkippedSampleWarning,
)
from .geometry import (
    _distortion_jacobian,
    project_points,
    rodrigues,
    rodrigues_inv,
    skew,
    undistort_pixel,
)
from .kvfile import read_kv, write_kv

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1e-6
SPREAD_WARN_RATIO = 2.0
CONDITION_WARN = 1e6
SINGULAR_RCOND = 1e-12
EPS_DEN = 1e-6
PNP_MAX_ITER = 50
PNP_STEP_TOL = 1e-10
PNP_COST_RTOL = 1e-10
PNP_FD_STEP = 1e-6


def _segments_cross(a, b, c, d):
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    return o1 * o2 < 0 and o3 * o4 < 0


@dataclass(frozen=True, eq=False)
class MarkerObservation:
    """Corner pixels of one square marker in one image.

    Corners follow the object-point order of :func:`marker_object_points`:
    top-left, top-right, bottom-right, bottom-left as seen on the marker.
    """

    image_id: str
    marker_id: int
    size: float
    corners: np.ndarray

    def __post_init__(self):
        c = np.array(self.corners, dtype=float).reshape(4, 2)
        if not self.size > 0:
            raise ValueError("marker size must be positive")
        if _segments_cross(c[0], c[1], c[2], c[3]) or _segments_cross(c[1], c[2], c[3], c[0]):
            raise DegenerateTargetError(
                f"marker {self.marker_id} in {self.image_id}: corners self-intersect"
            )
        c.setflags(write=False)
        object.__setattr__(self, "corners", c)


@dataclass(frozen=True, eq=False)
class MarkerPose:
    rvec: np.ndarray
    tvec: np.ndarray
    reprojection_rms: float
    iterations: int = 0

    @property
    def rotation(self):
        return rodrigues(self.rvec)


@dataclass(frozen=True)
class CalibrationSample:
    d_pred: float
    z_real: float
    image_id: str = ""
    marker_id: int = -1
    corner: int = -1
    flagged: bool = False


@dataclass(frozen=True)
class RidgeSolution:
    x: np.ndarray
    condition_number: float


@dataclass(frozen=True)
class CalibrationResult:
    s1: float
    s2: float
    residual_rms: float
    depth_spread_ratio: float
    condition_number: float
    sample_count: int
    lam: float = DEFAULT_LAMBDA
    flagged_count: int = 0
    samples: tuple = field(default=(), repr=False)

    @property
    def physically_meaningful(self):
        return self.s1 > 0

    @property
    def ill_conditioned(self):
        return self.condition_number > CONDITION_WARN


def marker_object_points(size):
    """Corner coordinates in the marker frame (z = 0 plane), shape (4, 3)."""
    if not size > 0:
        raise ValueError("marker size must be positive")
    h = size / 2.0
    return np.array(
        [
            [-h, h, 0.0],
            [h, h, 0.0],
            [h, -h, 0.0],
            [-h, -h, 0.0],
        ]
    )


def _normalize_2d(pts):
    mean = pts.mean(axis=0)
    scale = math.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - mean, axis=1)), 1e-300)
    T = np.array([[scale, 0.0, -scale * mean[0]], [0.0, scale, -scale * mean[1]], [0.0, 0.0, 1.0]])
    return T


def _homography(src, dst):
    """DLT homography mapping (N, 2) ``src`` to (N, 2) ``dst``, Hartley-normalized."""
    Ts, Td = _normalize_2d(src), _normalize_2d(dst)
    s = (np.c_[src, np.ones(len(src))] @ Ts.T)[:, :2]
    d = (np.c_[dst, np.ones(len(dst))] @ Td.T)[:, :2]
    rows = []
    for (x, y), (u, v) in zip(s, d):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    _, sv, vt = np.linalg.svd(np.asarray(rows))
    # sv has 8 entries for 4 points; a rank drop below 8 means a degenerate target
    if sv[-1] < 1e-9 * sv[0]:
        raise DegenerateTargetError("corner configuration does not determine a homography")
    Hn = vt[-1].reshape(3, 3)
    return np.linalg.inv(Td) @ Hn @ Ts


def _check_collinear(xy):
    diam = max(np.linalg.norm(a - b) for a in xy for b in xy)
    if diam <= 0:
        raise DegenerateTargetError("marker corners coincide")
    for i in range(4):
        a, b, c = (xy[j] for j in range(4) if j != i)
        area = 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        if area < 1e-6 * diam * diam:
            raise DegenerateTargetError("marker corners are collinear within tolerance")


def _pose_from_homography(H):
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    r1, r2, t = lam * h1, lam * h2, lam * h3
    if t[2] < 0:
        r1, r2, t = -r1, -r2, -t
    R = np.column_stack([r1, r2, np.cross(r1, r2)])
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return R, t


def _reprojection(intr, R, t, obj, observed):
    P = obj @ R.T + t
    if np.any(P[:, 2] <= 0):
        raise BehindCameraError("marker pose puts a corner behind the camera")
    return project_points(intr, P) - observed, P


def _reprojection_jacobian(intr, R, t, obj):
    """d(pixel)/d(delta_omega, delta_t) for the left-multiplied rotation update."""
    RP = obj @ R.T
    P = RP + t
    J = np.empty((2 * len(obj), 6))
    for i, (X, Y, Z) in enumerate(P):
        x, y = X / Z, Y / Z
        j11, j12, j21, j22 = _distortion_jacobian(x, y, intr.dist)
        Jd = np.array([[intr.fx * j11, intr.fx * j12], [intr.fy * j21, intr.fy * j22]])
        Jproj = np.array([[1.0 / Z, 0.0, -X / (Z * Z)], [0.0, 1.0 / Z, -Y / (Z * Z)]])
        Jp = np.hstack([-skew(RP[i]), np.eye(3)])
        J[2 * i : 2 * i + 2] = Jd @ Jproj @ Jp
    return J


def _newton_step(intr, R, t, obj, J, r):
    """Newton step (GN normal matrix plus the residual-curvature term), or None.

    With noisy corners the residual does not vanish and plain GN crawls
    along the weakly constrained tilt direction.  ``sum r_i * Hess(r_i)`` is
    taken from finite differences of the analytic Jacobian.
    """
    g = J.T @ r
    H = J.T @ J
    if np.any(r != 0.0):
        S = np.empty((6, 6))
        for k in range(6):
            d = np.zeros(6)
            d[k] = PNP_FD_STEP
            Jk = _reprojection_jacobian(intr, rodrigues(d[:3]) @ R, t + d[3:], obj)
            S[:, k] = (Jk - J).T @ r / PNP_FD_STEP
        Hn = H + 0.5 * (S + S.T)
        try:
            np.linalg.cholesky(Hn)
            return np.linalg.solve(Hn, -g)
        except np.linalg.LinAlgError:
            pass
    return None


def _cost_after(intr, R, t, obj, observed, step):
    R2, t2 = rodrigues(step[:3]) @ R, t + step[3:]
    try:
        res, _ = _reprojection(intr, R2, t2, obj, observed)
    except BehindCameraError:
        return math.inf
    return float(res.ravel() @ res.ravel())


def estimate_marker_pose(intr, obs, max_iter=PNP_MAX_ITER, step_tol=PNP_STEP_TOL):
    """6-DoF marker pose from its four corner pixels.

    Planar homography on undistorted normalized coordinates gives the
    initial pose; Gauss-Newton on the pixel reprojection residual (with lens
    distortion) refines it.
    """
    obj = marker_object_points(obs.size)
    xy = undistort_pixel(intr, obs.corners[:, 0], obs.corners[:, 1])
    _check_collinear(xy)
    R, t = _pose_from_homography(_homography(obj[:, :2], xy))

    trace = []
    res, _ = _reprojection(intr, R, t, obj, obs.corners)
    for it in range(1, max_iter + 1):
        cost = float(res.ravel() @ res.ravel())
        J = _reprojection_jacobian(intr, R, t, obj)
        step = np.linalg.lstsq(J, -res.ravel(), rcond=None)[0]
        # take the Newton step only when it beats plain GN on this iteration
        newton = _newton_step(intr, R, t, obj, J, res.ravel())
        if newton is not None and _cost_after(intr, R, t, obj, obs.corners, newton) < _cost_after(
            intr, R, t, obj, obs.corners, step
        ):
            step = newton
        step_norm = float(np.linalg.norm(step))
        trace.append((cost, step_norm))
        if not np.isfinite(step_norm):
            raise NonConvergenceError("PnP Gauss-Newton produced a non-finite step", trace)
        R = rodrigues(step[:3]) @ R
        t = t + step[3:]
        try:
            res, _ = _reprojection(intr, R, t, obj, obs.corners)
        except BehindCameraError:
            raise NonConvergenceError("PnP Gauss-Newton moved the marker behind the camera", trace)
        new_cost = float(res.ravel() @ res.ravel())
        if not np.isfinite(new_cost) or new_cost > 1e6 * max(cost, 1.0):
            raise NonConvergenceError("PnP Gauss-Newton diverged", trace + [(new_cost, step_norm)])
        if step_norm < step_tol or abs(cost - new_cost) <= PNP_COST_RTOL * cost:
            break
    else:
        raise NonConvergenceError(
            f"PnP Gauss-Newton did not converge in {max_iter} iterations", trace
        )
    rms = float(math.sqrt(np.mean(np.sum(res * res, axis=1))))
    return MarkerPose(rodrigues_inv(R), t.copy(), rms, it)


def corner_depths(pose, size):
    """Camera-frame z of each marker corner, shape (4,)."""
    P = marker_object_points(size) @ pose.rotation.T + pose.tvec
    if np.any(P[:, 2] <= 0):
        raise BehindCameraError("a marker corner lies behind the camera")
    return P[:, 2].copy()


def sample_relative_depth(D, u, v):
    """Bilinear sample at sub-pixel ``(u, v)``; returns ``(value, flagged)``.

    If any of the four neighbours is invalid, the nearest valid neighbour is
    returned instead and ``flagged`` is True.
    """
    if not (1.0 <= u <= D.width - 2.0 and 1.0 <= v <= D.height - 2.0):
        raise InvalidSampleError(
            f"sample ({u:.3f}, {v:.3f}) is outside the image or within 1 px of its border"
        )
    u0, v0 = int(math.floor(u)), int(math.floor(v))
    fu, fv = u - u0, v - v0
    patch = D.data[v0 : v0 + 2, u0 : u0 + 2]
    valid = D.mask[v0 : v0 + 2, u0 : u0 + 2]
    if valid.all():
        top = patch[0, 0] * (1.0 - fu) + patch[0, 1] * fu
        bottom = patch[1, 0] * (1.0 - fu) + patch[1, 1] * fu
        return float(top * (1.0 - fv) + bottom * fv), False
    if not valid.any():
        raise InvalidSampleError(f"all neighbours of ({u:.3f}, {v:.3f}) are invalid")
    best = None
    for dv in (0, 1):
        for du in (0, 1):
            if valid[dv, du]:
                d2 = (fu - du) ** 2 + (fv - dv) ** 2
                if best is None or d2 < best[0]:
                    best = (d2, float(patch[dv, du]))
    return best[1], True


def solve_ridge(A, b, lam=DEFAULT_LAMBDA):
    """Closed-form ridge solution ``(A^T A + lam I)^-1 A^T b`` for a 2-column ``A``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if A.ndim != 2 or A.shape[1] != 2 or A.shape[0] != b.shape[0]:
        raise ValueError("A must be n x 2 and match b")
    if A.shape[0] < 2:
        raise ValueError("need at least two samples")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    M = A.T @ A + lam * np.eye(2)
    evals = np.linalg.eigvalsh(M)
    cond = math.inf if evals[0] <= 0 else float(evals[-1] / evals[0])
    if not cond < 1.0 / SINGULAR_RCOND:
        raise IllConditionedError(
            f"normal matrix is singular (condition number {cond:.3e}); "
            "add markers at both a near and a far distance"
        )
    x = np.linalg.solve(M, A.T @ b)
    return RidgeSolution(x, cond)


def collect_samples(images, intr):
    """Marker poses -> (d_pred, z_real) samples for every usable corner."""
    samples = []
    for D_rel, observations in images:
        if D_rel.kind != RELATIVE:
            raise ValueError("calibration images must hold relative inverse depth")
        for obs in observations:
            pose = estimate_marker_pose(intr, obs)
            z = corner_depths(pose, obs.size)
            # depth images are rectified, so sample at the undistorted corner pixel
            xy = undistort_pixel(intr, obs.corners[:, 0], obs.corners[:, 1])
            us = intr.fx * xy[:, 0] + intr.cx
            vs = intr.fy * xy[:, 1] + intr.cy
            for j in range(4):
                try:
                    d, flagged = sample_relative_depth(D_rel, us[j], vs[j])
                except InvalidSampleError as exc:
                    warnings.warn(
                        f"skipping corner {j} of marker {obs.marker_id} in {obs.image_id}: {exc}",
                        SkippedSampleWarning,
                        stacklevel=2,
                    )
                    continue
                samples.append(
                    CalibrationSample(d, float(z[j]), obs.image_id, obs.marker_id, j, flagged)
                )
    return samples


def calibrate_samples(samples, lam=DEFAULT_LAMBDA):
    if not samples:
        raise EmptyCalibrationError("no usable calibration samples")
    if len(samples) < 2:
        raise EmptyCalibrationError("calibration needs at least two corner samples")
    A = np.array([[s.d_pred, 1.0] for s in samples])
    b = np.array([1.0 / s.z_real for s in samples])
    sol = solve_ridge(A, b, lam)
    z = np.array([s.z_real for s in samples])
    spread = float(z.max() / z.min())
    if spread < SPREAD_WARN_RATIO:
        warnings.warn(
            f"corner depths span only {z.min():.3f}-{z.max():.3f} m (ratio {spread:.2f}); "
            "use markers at both a near and a far distance",
            CalibrationSpreadWarning,
            stacklevel=2,
        )
    if sol.condition_number > CONDITION_WARN:
        warnings.warn(
            f"calibration system is ill-conditioned (condition number {sol.condition_number:.3e})",
            IllConditionedWarning,
            stacklevel=2,
        )
    residual = A @ sol.x - b
    return CalibrationResult(
        s1=float(sol.x[0]),
        s2=float(sol.x[1]),
        residual_rms=float(math.sqrt(np.mean(residual * residual))),
        depth_spread_ratio=spread,
        condition_number=sol.condition_number,
        sample_count=len(samples),
        lam=float(lam),
        flagged_count=sum(s.flagged for s in samples),
        samples=tuple(samples),
    )


def calibrate(images, intr, lam=DEFAULT_LAMBDA):
    """Estimate ``(s1, s2)`` from ``[(relative DepthImage, [MarkerObservation, ...]), ...]``."""
    if not images:
        raise EmptyCalibrationError("calibration needs at least one image")
    result = calibrate_samples(collect_samples(images, intr), lam)
    if not result.physically_meaningful:
        log.warning("calibrated scale s1=%.6g is not positive", result.s1)
    return result


def apply_scale_correction(D_rel, s1, s2, eps_den=EPS_DEN):
    """Element-wise ``1 / (s1 * D_rel + s2)``; small denominators become invalid."""
    if D_rel.kind != RELATIVE:
        raise ValueError("scale correction expects a relative inverse depth image")
    with np.errstate(invalid="ignore"):
        den = s1 * D_rel.data + s2
        ok = D_rel.mask & (den > eps_den)
    metric = np.full(D_rel.shape, np.nan)
    metric[ok] = 1.0 / den[ok]
    return DepthImage(metric, METRIC, ok)


# --- files -------------------------------------------------------------------


def read_annotations(path):
    """Marker annotation records: ``image_id marker_id size u1 v1 ... u4 v4``."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].split()
        if not body:
            continue
        if len(body) != 11:
            raise FormatError(f"{path}:{lineno}: expected 11 fields, got {len(body)}")
        try:
            marker_id = int(body[1])
            size = float(body[2])
            corners = np.array([float(x) for x in body[3:]]).reshape(4, 2)
        except ValueError:
            raise NumericParseError(f"{path}:{lineno}: non-numeric marker record") from None
        out.append(MarkerObservation(body[0], marker_id, size, corners))
    return out


def write_annotations(path, observations):
    lines = ["# image_id marker_id size u1 v1 u2 v2 u3 v3 u4 v4 (pixels, size in meters)"]
    for obs in observations:
        coords = " ".join(repr(float(c)) for c in obs.corners.ravel())
        lines.append(f"{obs.image_id} {obs.marker_id} {obs.size!r} {coords}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_calibration(path, result):
    write_kv(
        path,
        [
            ("s1", result.s1),
            ("s2", result.s2),
            ("lambda", result.lam),
            ("residual_rms", result.residual_rms),
            ("condition_number", result.condition_number),
            ("sample_count", result.sample_count),
            ("depth_spread_ratio", result.depth_spread_ratio),
        ],
        header="disparity calibration: 1/Z = s1 * d_rel + s2 (s2 and residual_rms in 1/m)",
    )


def read_calibration(path):
    """Return ``(s1, s2)`` from a calibration file."""
    kv = read_kv(path)
    return kv.float("s1"), kv.float("s2")

"""Depth images, PFM files, synthetic relative depth and depth-error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyEvaluationError, FormatError

RELATIVE = "relative_inverse"
METRIC = "metric"
KINDS = (RELATIVE, METRIC)


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Row-major scalar field with a validity mask.

    ``data[v, u]`` is the value at column ``u``, row ``v``.  Invalid pixels
    hold NaN in ``data`` and ``False`` in ``mask``; metric values are
    positive wherever valid.
    """

    data: np.ndarray
    kind: str = METRIC
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown depth kind {self.kind!r}")
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError("depth data must be two-dimensional (height, width)")
        mask = np.isfinite(data)
        if self.mask is not None:
            given = np.asarray(self.mask, dtype=bool)
            if given.shape != data.shape:
                raise ValueError("mask shape does not match data")
            mask &= given
        if self.kind == METRIC:
            mask &= np.where(mask, data, 1.0) > 0.0
        data[~mask] = np.nan
        data.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def full(cls, width, height, value, kind=METRIC):
        return cls(np.full((height, width), float(value)), kind)


@dataclass(frozen=True)
class DisparityDistortion:
    """Ground-truth affine disparity distortion used to fake a relative-depth model."""

    s1_true: float
    s2_true: float
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.s1_true > 0:
            raise ValueError("s1_true must be positive")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be non-negative")


def distort_to_relative(Z, distortion, rng=None):
    """Metric depth to relative inverse depth ``((1/Z) - s2) / s1``.

    Multiplicative noise ``(1 + sigma * xi)`` is drawn per pixel from
    ``rng`` or, when omitted, from a generator seeded with
    ``distortion.seed``.
    """
    if Z.kind != METRIC:
        raise ValueError("distort_to_relative expects a metric depth image")
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = (1.0 / Z.data - distortion.s2_true) / distortion.s1_true
    if distortion.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(distortion.seed)
        rel = rel * (1.0 + distortion.noise_sigma * rng.standard_normal(rel.shape))
    return DepthImage(rel, RELATIVE, Z.mask)


def eval_depth(pred, gt):
    """MAE and RMSE in meters over pixels valid in both images."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    joint = pred.mask & gt.mask
    n = int(joint.sum())
    if n == 0:
        raise EmptyEvaluationError("no pixel is valid in both images")
    err = pred.data[joint] - gt.data[joint]
    mae = float(np.mean(np.abs(err)))
    rmse = float(math.sqrt(np.mean(err * err)))
    return mae, rmse


# --- PFM ---------------------------------------------------------------------


def save_pfm(path, image):
    """Write a single-channel little-endian PFM; invalid pixels become NaN."""
    data = np.where(image.mask, image.data, np.nan).astype("<f4")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(np.flipud(data).tobytes())


def _read_line(buf, pos):
    end = buf.find(b"\n", pos)
    if end < 0:
        raise FormatError(f"PFM header truncated at byte {pos}")
    return buf[pos:end].decode("ascii", errors="replace").strip(), end + 1


def load_pfm(path, kind=METRIC):
    buf = Path(path).read_bytes()
    magic, pos = _read_line(buf, 0)
    if magic == "PF":
        raise FormatError("PFM at byte 0: three-channel 'PF' images are not supported")
    if magic != "Pf":
        raise FormatError(f"PFM at byte 0: bad magic {magic!r}, expected 'Pf'")
    dims_at = pos
    dims, pos = _read_line(buf, pos)
    try:
        w, h = (int(tok) for tok in dims.split())
    except ValueError:
        raise FormatError(f"PFM at byte {dims_at}: bad dimensions line {dims!r}") from None
    if w <= 0 or h <= 0:
        raise FormatError(f"PFM at byte {dims_at}: non-positive dimensions {w}x{h}")
    scale_at = pos
    scale_line, pos = _read_line(buf, pos)
    try:
        scale = float(scale_line)
    except ValueError:
        raise FormatError(f"PFM at byte {scale_at}: bad scale line {scale_line!r}") from None
    if scale == 0.0:
        raise FormatError(f"PFM at byte {scale_at}: scale must be non-zero")
    dtype = "<f4" if scale < 0 else ">f4"
    need = w * h * 4
    if len(buf) - pos < need:
        raise FormatError(
            f"PFM payload truncated: expected {need} bytes from byte {pos}, "
            f"file ends at byte {len(buf)}"
        )
    data = np.frombuffer(buf, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return DepthImage(np.flipud(data).astype(float), kind)

"""Language-grounded region confidences to waypoint commands, plus arrival detection.

An external scorer rates the left, centre and right thirds of the camera
image against an instruction.  The best region steers the robot when it is
confident enough; otherwise the robot explores straight ahead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, NumericParseError

REGIONS = ("left", "center", "right")
DEFAULT_REGION_ANGLE = math.radians(25.0)
STEER_THRESHOLD = 0.65
NEAR_THRESHOLD = 0.80
DEFAULT_K = 5
DEFAULT_ARRIVAL_THRESHOLD = 0.80


@dataclass(frozen=True)
class RegionConfidence:
    left: float
    center: float
    right: float
    phi_left: float = DEFAULT_REGION_ANGLE
    phi_center: float = 0.0
    phi_right: float = -DEFAULT_REGION_ANGLE

    def __post_init__(self):
        for name in REGIONS:
            s = getattr(self, name)
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"{name} score {s} is outside [0, 1]")
        if not self.phi_left > 0.0 > self.phi_right:
            raise ValueError("region angles must satisfy phi_left > 0 > phi_right")

    @property
    def scores(self):
        return (self.left, self.center, self.right)

    @property
    def best(self):
        """``(region name, score, angle)`` of the highest score; ties go left to right."""
        i = int(np.argmax(self.scores))
        return REGIONS[i], self.scores[i], (self.phi_left, self.phi_center, self.phi_right)[i]


@dataclass(frozen=True)
class HighLevelCommand:
    d_cmd: float
    theta_cmd: float


def command_from_confidence(rc):
    """Piecewise waypoint rule.

    ``theta = phi_best`` if ``S_max > 0.65`` else 0;
    ``d = 1 + 0.3 S_max`` if ``S_max > 0.8``, ``2 + 0.5 S_max`` if
    ``0.65 < S_max <= 0.8``, else 3.
    """
    _, s_max, phi = rc.best
    theta = phi if s_max > STEER_THRESHOLD else 0.0
    if s_max > NEAR_THRESHOLD:
        d = 1.0 + 0.3 * s_max
    elif s_max > STEER_THRESHOLD:
        d = 2.0 + 0.5 * s_max
    else:
        d = 3.0
    return HighLevelCommand(d, theta)


def to_world(cmd, pose):
    """World waypoint ``d_cmd`` ahead along ``heading + theta_cmd`` (heading 0 faces +y)."""
    a = pose.heading + cmd.theta_cmd
    return np.array([pose.x - cmd.d_cmd * math.sin(a), pose.y + cmd.d_cmd * math.cos(a)])


@dataclass(frozen=True)
class ArrivalDetector:
    k: int = DEFAULT_K
    threshold: float = DEFAULT_ARRIVAL_THRESHOLD
    count: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("K must be >= 1")
        if self.count < 0:
            raise ValueError("count must be non-negative")


def arrival_update(det, rc):
    """Count consecutive confident centre frames; ``reached`` once the count hits K."""
    region, s_max, _ = rc.best
    count = det.count + 1 if region == "center" and s_max > det.threshold else 0
    det = replace(det, count=count)
    return det, count >= det.k


@dataclass(frozen=True)
class ConfidenceRecord:
    t: float
    left: float
    center: float
    right: float


def parse_confidence_line(line, where="<line>"):
    tok = line.split("#", 1)[0].split()
    if not tok:
        return None
    if len(tok) != 4:
        raise FormatError(f"{where}: expected 't s_left s_center s_right', got {line.strip()!r}")
    try:
        return ConfidenceRecord(*(float(x) for x in tok))
    except ValueError:
        raise NumericParseError(f"{where}: non-numeric confidence record {line.strip()!r}") from None


def read_confidence_stream(path):
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        rec = parse_confidence_line(line, f"{path}:{lineno}")
        if rec is not None:
            out.append(rec)
    return out


def run_stream(records, pose, detector=None, phi=DEFAULT_REGION_ANGLE):
    """Waypoint and arrival flag for each record, in order.

    The pose is held fixed; callers driving a robot update it between frames.
    """
    det = detector or ArrivalDetector()
    out = []
    for rec in records:
        rc = RegionConfidence(rec.left, rec.center, rec.right, phi, 0.0, -phi)
        cmd = command_from_confidence(rc)
        det, reached = arrival_update(det, rc)
        out.append((rec.t, cmd, to_world(cmd, pose), reached))
    return out, det

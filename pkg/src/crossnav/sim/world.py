"""Obstacle worlds, scenario files and the seeded cylinder-field generator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, GenerationError, NumericParseError
from ..geometry import Pose2D


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder spanning ``z_min <= z <= height``."""

    x: float
    y: float
    radius: float
    height: float = 1.0
    z_min: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")
        if not self.height > self.z_min >= 0:
            raise ValueError("cylinder needs 0 <= z_min < height")

    def spans(self, lo, hi):
        """Whether the vertical extent meets the open band (lo, hi)."""
        return self.z_min < hi and self.height > lo


@dataclass(frozen=True)
class Box:
    """World-axis-aligned box spanning ``z_min <= z <= height``."""

    x: float
    y: float
    hx: float
    hy: float
    height: float = 1.0
    z_min: float = 0.0

    def __post_init__(self):
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("box half extents must be positive")
        if not self.height > self.z_min >= 0:
            raise ValueError("box needs 0 <= z_min < height")

    def spans(self, lo, hi):
        return self.z_min < hi and self.height > lo

    @property
    def corners(self):
        """Footprint corners, counter-clockwise, shape (4, 2)."""
        return np.array(
            [
                [self.x - self.hx, self.y - self.hy],
                [self.x + self.hx, self.y - self.hy],
                [self.x + self.hx, self.y + self.hy],
                [self.x - self.hx, self.y + self.hy],
            ]
        )


@dataclass(frozen=True)
class World:
    obstacles: tuple
    bounds: tuple  # (x_min, y_min, x_max, y_max)
    start: Pose2D
    goal: tuple

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))
        x0, y0, x1, y1 = self.bounds
        if not (x0 < x1 and y0 < y1):
            raise ValueError("bounds must be (x_min, y_min, x_max, y_max) with positive extent")
        for label, (px, py) in (("start", (self.start.x, self.start.y)), ("goal", self.goal)):
            if not (x0 <= px <= x1 and y0 <= py <= y1):
                raise ValueError(f"{label} lies outside the world bounds")

    @property
    def cylinders(self):
        return [o for o in self.obstacles if isinstance(o, Cylinder)]

    @property
    def boxes(self):
        return [o for o in self.obstacles if isinstance(o, Box)]

    @property
    def straight_line_distance(self):
        return math.hypot(self.goal[0] - self.start.x, self.goal[1] - self.start.y)

    def with_obstacles(self, extra):
        return World(self.obstacles + tuple(extra), self.bounds, self.start, self.goal)


def boundary_walls(bounds, thickness=0.1, height=2.0):
    """Four boxes hugging the outside of ``bounds``."""
    x0, y0, x1, y1 = bounds
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    hx, hy = (x1 - x0) / 2 + thickness, (y1 - y0) / 2 + thickness
    t = thickness / 2
    return (
        Box(cx, y0 - t, hx, t, height),
        Box(cx, y1 + t, hx, t, height),
        Box(x0 - t, cy, t, hy, height),
        Box(x1 + t, cy, t, hy, height),
    )


# --- scenario file -----------------------------------------------------------


def write_scenario(path, world):
    x0, y0, x1, y1 = world.bounds
    s = world.start
    lines = [
        "# scenario: bounds x_min y_min x_max y_max | start x y heading | goal x y",
        "# cyl x y radius top [bottom] | box x y half_x half_y top [bottom]  (meters)",
        f"bounds {x0!r} {y0!r} {x1!r} {y1!r}",
        f"start {s.x!r} {s.y!r} {s.heading!r}",
        f"goal {world.goal[0]!r} {world.goal[1]!r}",
    ]
    for o in world.obstacles:
        tail = f" {o.z_min!r}" if o.z_min else ""
        if isinstance(o, Cylinder):
            lines.append(f"cyl {o.x!r} {o.y!r} {o.radius!r} {o.height!r}{tail}")
        else:
            lines.append(f"box {o.x!r} {o.y!r} {o.hx!r} {o.hy!r} {o.height!r}{tail}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_scenario(path):
    bounds = start = goal = None
    obstacles = []
    arity = {"bounds": (4,), "start": (3,), "goal": (2,), "cyl": (4, 5), "box": (5, 6)}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        tok = line.split("#", 1)[0].split()
        if not tok:
            continue
        kind, args = tok[0], tok[1:]
        if kind not in arity:
            raise FormatError(f"{path}:{lineno}: unknown record {kind!r}")
        if len(args) not in arity[kind]:
            raise FormatError(f"{path}:{lineno}: '{kind}' takes {arity[kind]} numbers")
        try:
            vals = [float(a) for a in args]
        except ValueError:
            raise NumericParseError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
        try:
            if kind == "bounds":
                bounds = tuple(vals)
            elif kind == "start":
                start = Pose2D(*vals)
            elif kind == "goal":
                goal = tuple(vals)
            elif kind == "cyl":
                obstacles.append(Cylinder(*vals))
            else:
                obstacles.append(Box(*vals))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    for label, value in (("bounds", bounds), ("start", start), ("goal", goal)):
        if value is None:
            raise FormatError(f"{path}: missing '{label}' record")
    try:
        return World(tuple(obstacles), bounds, start, goal)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# --- generator ---------------------------------------------------------------

DEFAULT_BOUNDS = (-2.5, -1.0, 2.5, 11.0)
DEFAULT_START = Pose2D(0.0, 0.0, 0.0)
DEFAULT_GOAL = (0.0, 10.0)


def generate_scenario(
    seed,
    density,
    body,
    bounds=DEFAULT_BOUNDS,
    start=DEFAULT_START,
    goal=DEFAULT_GOAL,
    radius_range=(0.1, 0.25),
    height=1.0,
    clearance=1.0,
    max_path_ratio=None,
    walls=True,
    resolution=0.05,
    max_attempts=200,
):
    """Cylinder field with a Poisson number of obstacles per unit area.

    Cylinders closer than ``clearance`` to the start or goal are rejected.
    Whole worlds are redrawn until the inflated-grid Dijkstra path exists
    (and, if ``max_path_ratio`` is given, is at most that multiple of the
    straight-line distance).
    """
    from .grid import dijkstra_path_length

    if density < 0:
        raise ValueError("density must be non-negative")
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = bounds
    area = (x1 - x0) * (y1 - y0)
    wall_boxes = boundary_walls(bounds) if walls else ()
    keep_out = [(start.x, start.y), goal]
    for _ in range(max_attempts):
        n = rng.poisson(density * area)
        cyls = []
        for _ in range(n):
            r = rng.uniform(*radius_range)
            cx = rng.uniform(x0 + r, x1 - r)
            cy = rng.uniform(y0 + r, y1 - r)
            if any(math.hypot(cx - px, cy - py) < clearance + r for px, py in keep_out):
                continue
            cyls.append(Cylinder(float(cx), float(cy), float(r), height))
        world = World(tuple(cyls) + wall_boxes, bounds, start, goal)
        length = dijkstra_path_length(world, body, resolution)
        if not math.isfinite(length):
            continue
        if max_path_ratio is not None and length > max_path_ratio * world.straight_line_distance:
            continue
        return world
    raise GenerationError(f"no feasible world after {max_attempts} attempts (seed {seed})")

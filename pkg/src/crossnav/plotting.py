"""Top-down SVG trajectory plots (no plotting library needed)."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .geometry import Pose2D
from .sim.dynamics import body_corners
from .sim.world import Cylinder

SCALE = 50.0  # pixels per meter
FOOTPRINT_EVERY = 5


def _fmt(v):
    return f"{v:.4f}".rstrip("0").rstrip(".")


def trajectory_svg(world, trajectory, body=None, title=""):
    """SVG text; the view box is exactly the world bounds (y up)."""
    x0, y0, x1, y1 = world.bounds
    w, h = x1 - x0, y1 - y0

    def px(x):
        return _fmt((x - x0) * SCALE)

    def py(y):
        return _fmt((y1 - y) * SCALE)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(w * SCALE)}" height="{_fmt(h * SCALE)}" '
        f'viewBox="0 0 {_fmt(w * SCALE)} {_fmt(h * SCALE)}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{_fmt(w * SCALE)}" height="{_fmt(h * SCALE)}" fill="white" stroke="black"/>',
    ]
    for o in world.obstacles:
        if isinstance(o, Cylinder):
            out.append(f'<circle cx="{px(o.x)}" cy="{py(o.y)}" r="{_fmt(o.radius * SCALE)}" fill="#555"/>')
        else:
            out.append(
                f'<rect x="{px(o.x - o.hx)}" y="{py(o.y + o.hy)}" width="{_fmt(2 * o.hx * SCALE)}" '
                f'height="{_fmt(2 * o.hy * SCALE)}" fill="#555"/>'
            )
    if body is not None:
        for row in trajectory[::FOOTPRINT_EVERY]:
            c = body_corners(Pose2D(row[1], row[2], row[3]), body)
            pts = " ".join(f"{px(a)},{py(b)}" for a, b in c)
            out.append(f'<polygon points="{pts}" fill="none" stroke="#6a9fd8" stroke-width="1"/>')
    if len(trajectory):
        pts = " ".join(f"{px(r[1])},{py(r[2])}" for r in trajectory)
        out.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e9a" stroke-width="2"/>')
    s = world.start
    gx, gy = world.goal
    out.append(f'<text x="{px(s.x)}" y="{py(s.y)}" fill="red" font-size="20" text-anchor="middle">S</text>')
    out.append(f'<text x="{px(gx)}" y="{py(gy)}" fill="green" font-size="20" text-anchor="middle">G</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_trajectory_plot(result, world, path, body=None, title=""):
    """Write the plot for an episode result (or a raw ``(t, x, y, heading)`` array)."""
    traj = getattr(result, "trajectory", result)
    Path(path).write_text(trajectory_svg(world, traj, body, title))
    return Path(path)

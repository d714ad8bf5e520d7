"""Ray-cast depth rendering and the exact planar scan oracle."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ..depth import METRIC, DepthImage
from ..geometry import rot_z
from ..scan import VirtualScan, project_to_scan, stride_pixels
from .world import Cylinder

RANGE_EPS = 1e-9


def camera_world_pose(robot_pose, ext):
    """``(R, origin)`` with ``p_world = R @ p_cam + origin``."""
    Rz = rot_z(robot_pose.heading)
    R = Rz @ ext.rotation
    origin = Rz @ ext.translation + np.array([robot_pose.x, robot_pose.y, 0.0])
    return R, origin


@lru_cache(maxsize=32)
def _pixel_rays(fx, fy, cx, cy, width, height, stride):
    u, v = stride_pixels(width, height, stride)
    rays = np.stack([(u - cx) / fx, (v - cy) / fy, np.ones(u.shape)], axis=-1)
    rays.setflags(write=False)
    return u, v, rays


def _hit_cylinder(o, d, cyl, t):
    """Shrink ``t`` in place to the nearest hit with a capped vertical cylinder."""
    ox, oy = o[0] - cyl.x, o[1] - cyl.y
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    a = dx * dx + dy * dy
    b = 2.0 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - cyl.radius * cyl.radius
    disc = b * b - 4.0 * a * c
    with np.errstate(invalid="ignore", divide="ignore"):
        t_side = (-b - np.sqrt(disc)) / (2.0 * a)
        z = o[2] + t_side * dz
        side = (disc >= 0) & (a > 0) & (t_side > 0) & (z >= cyl.z_min) & (z <= cyl.height)
        np.minimum(t, np.where(side, t_side, np.inf), out=t)
        for zc in (cyl.height, cyl.z_min):
            if zc == 0.0:
                continue
            t_cap = (zc - o[2]) / dz
            px = ox + t_cap * dx
            py = oy + t_cap * dy
            cap = (t_cap > 0) & (px * px + py * py <= cyl.radius * cyl.radius)
            np.minimum(t, np.where(cap, t_cap, np.inf), out=t)


def _hit_box(o, d, box, t):
    """Slab test against an axis-aligned box; shrinks ``t`` in place."""
    lo = (box.x - box.hx, box.y - box.hy, box.z_min)
    hi = (box.x + box.hx, box.y + box.hy, box.height)
    t_near = np.full(len(d), -np.inf)
    t_far = np.full(len(d), np.inf)
    for k in range(3):
        dk = d[:, k]
        with np.errstate(invalid="ignore", divide="ignore"):
            inv = 1.0 / dk
            t1 = (lo[k] - o[k]) * inv
            t2 = (hi[k] - o[k]) * inv
        par = dk == 0
        if par.any():
            # parallel to this slab: no constraint inside it, no hit outside it
            inside = lo[k] <= o[k] <= hi[k]
            t1[par] = -np.inf if inside else np.inf
            t2[par] = np.inf if inside else -np.inf
        np.maximum(t_near, np.minimum(t1, t2), out=t_near)
        np.minimum(t_far, np.maximum(t1, t2), out=t_far)
    hit = (t_near <= t_far) & (t_near > 0)
    np.minimum(t, np.where(hit, t_near, np.inf), out=t)


def _bounding_circle(obst):
    if isinstance(obst, Cylinder):
        return obst.x, obst.y, obst.radius
    return obst.x, obst.y, math.hypot(obst.hx, obst.hy)


def cast_rays(world, origin, dirs):
    """Nearest positive hit parameter of rays ``origin + t * dirs`` (inf on miss).

    Each obstacle is only tested against rays whose horizontal bearing falls
    inside the angle its bounding circle subtends at the origin; no other
    ray can reach its vertical extrusion.
    """
    t = np.full(len(dirs), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = -origin[2] / dirs[:, 2]
    np.minimum(t, np.where((dirs[:, 2] < 0) & (t_ground > 0), t_ground, np.inf), out=t)
    hn = np.sqrt(dirs[:, 0] ** 2 + dirs[:, 1] ** 2)
    vertical = hn < 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(vertical, 0.0, dirs[:, 0] / hn)
        uy = np.where(vertical, 0.0, dirs[:, 1] / hn)
    for obst in world.obstacles:
        cx, cy, r = _bounding_circle(obst)
        ex, ey = cx - origin[0], cy - origin[1]
        d = math.hypot(ex, ey)
        if d <= r * (1.0 + 1e-9):
            sel = slice(None)
        else:
            # bearing within asin(r/d) of the centre <=> cosine above cos(asin(r/d))
            cos_half = math.sqrt(d * d - r * r) / d - 1e-9
            sel = np.flatnonzero((ux * (ex / d) + uy * (ey / d) >= cos_half) | vertical)
            if sel.size == 0:
                continue
        sub = t[sel]
        if isinstance(obst, Cylinder):
            _hit_cylinder(origin, dirs[sel], obst, sub)
        else:
            _hit_box(origin, dirs[sel], obst, sub)
        t[sel] = sub
    return t


def render_depth(world, camera_pose, intr, stride=1):
    """Perpendicular (camera z) depth of the nearest surface per pixel.

    ``camera_pose`` is ``(R, origin)`` from :func:`camera_world_pose`.  Pixels
    with no hit are invalid.  With ``stride > 1`` only the stride grid is
    rendered and all other pixels are invalid.
    """
    R, origin = camera_pose
    u, v, rays = _pixel_rays(intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height, stride)
    # ray z component is 1 in the camera frame, so the hit parameter is the depth
    t = cast_rays(world, np.asarray(origin, dtype=float), rays @ R.T)
    data = np.full((intr.height, intr.width), np.nan)
    data[v, u] = np.where(np.isfinite(t), t, np.nan)
    return DepthImage(data, METRIC)


# --- planar oracle -----------------------------------------------------------


def _ray_circle(angles, c, r):
    """Entry distance of rays from the origin at ``angles`` into a circle (inf on miss)."""
    ux, uy = np.cos(angles), np.sin(angles)
    proj = c[0] * ux + c[1] * uy
    perp2 = (c[0] * c[0] + c[1] * c[1]) - proj * proj
    disc = r * r - perp2
    with np.errstate(invalid="ignore"):
        t = proj - np.sqrt(disc)
    return np.where((disc >= 0) & (proj > 0) & (t > 0), t, np.inf)


def _ray_polygon(angles, poly):
    """Entry distance of rays from the origin into a convex polygon (inf on miss)."""
    ux, uy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    a = poly
    b = np.roll(poly, -1, axis=0)
    ex, ey = (b - a)[:, 0][None, :], (b - a)[:, 1][None, :]
    ax, ay = a[:, 0][None, :], a[:, 1][None, :]
    den = ux * ey - uy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ax * ey - ay * ex) / den
        s = (ax * uy - ay * ux) / den
    ok = (den != 0) & (t > 0) & (s >= 0) & (s <= 1)
    return np.min(np.where(ok, t, np.inf), axis=1)


def _inside_polygon(poly):
    """Whether the origin lies inside the convex polygon."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    cross = (b[:, 0] - a[:, 0]) * (-a[:, 1]) - (b[:, 1] - a[:, 1]) * (-a[:, 0])
    return bool(np.all(cross >= 0) or np.all(cross <= 0))


def _sector_min_circle(cfg, c, r):
    out = np.full(cfg.num_bins, np.inf)
    d = math.hypot(c[0], c[1])
    if d <= r:
        return np.full(cfg.num_bins, RANGE_EPS)
    t_edges = _ray_circle(cfg.edges, c, r)
    np.minimum(out, np.minimum(t_edges[:-1], t_edges[1:]), out=out)
    k = int(cfg.bin_index(math.atan2(c[1], c[0])))
    if k >= 0:
        out[k] = min(out[k], d - r)
    return out


def _sector_min_polygon(cfg, poly):
    out = np.full(cfg.num_bins, np.inf)
    if _inside_polygon(poly):
        return np.full(cfg.num_bins, RANGE_EPS)
    t_edges = _ray_polygon(cfg.edges, poly)
    np.minimum(out, np.minimum(t_edges[:-1], t_edges[1:]), out=out)
    candidates = [poly]
    a = poly
    b = np.roll(poly, -1, axis=0)
    e = b - a
    s = np.clip(-(a * e).sum(axis=1) / (e * e).sum(axis=1), 0.0, 1.0)
    candidates.append(a + s[:, None] * e)
    pts = np.vstack(candidates)
    k = cfg.bin_index(np.arctan2(pts[:, 1], pts[:, 0]))
    keep = k >= 0
    np.minimum.at(out, k[keep], np.hypot(pts[keep, 0], pts[keep, 1]))
    return out


def _beam_hits(world, robot_pose, cfg, origin, bearings):
    """Range along each planar beam from ``origin`` (robot frame); inf on miss."""
    t = np.full(len(bearings), np.inf)
    o = np.asarray(origin, dtype=float)
    for obst in world.obstacles:
        if not obst.spans(cfg.h_min, cfg.h_max):
            continue
        if isinstance(obst, Cylinder):
            c = robot_pose.to_robot(np.array([obst.x, obst.y])) - o
            if math.hypot(c[0], c[1]) <= obst.radius:
                return np.zeros(len(bearings))
            np.minimum(t, _ray_circle(bearings, c, obst.radius), out=t)
        else:
            poly = robot_pose.to_robot(obst.corners) - o
            if _inside_polygon(poly):
                return np.zeros(len(bearings))
            np.minimum(t, _ray_polygon(bearings, poly), out=t)
    return t


def ground_truth_scan(world, robot_pose, cfg, beams=None):
    """Planar oracle scan of obstacle footprints meeting ``(h_min, h_max)``.

    Without ``beams`` every bin holds the exact minimum range over its
    whole sector.  With ``beams = (origin, bearings)`` (robot frame) the
    scan is a 2D ray cast along those beams from ``origin``; hit points are
    binned by bearing from the drive centre exactly like
    :func:`crossnav.scan.project_to_scan`.  Ranges are measured from the
    drive centre; empty sectors read ``range_max``.
    """
    if beams is not None:
        origin, bearings = beams
        origin = np.asarray(origin, dtype=float)
        bearings = np.asarray(bearings, dtype=float)
        t = _beam_hits(world, robot_pose, cfg, origin, bearings)
        hit = np.isfinite(t)
        px = origin[0] + t[hit] * np.cos(bearings[hit])
        py = origin[1] + t[hit] * np.sin(bearings[hit])
        pts = np.column_stack([px, py, np.zeros(px.size)])
        return project_to_scan(pts, cfg)
    ranges = np.full(cfg.num_bins, np.inf)
    for o in world.obstacles:
        if not o.spans(cfg.h_min, cfg.h_max):
            continue
        if isinstance(o, Cylinder):
            c = robot_pose.to_robot(np.array([o.x, o.y]))
            np.minimum(ranges, _sector_min_circle(cfg, c, o.radius), out=ranges)
        else:
            poly = robot_pose.to_robot(o.corners)
            np.minimum(ranges, _sector_min_polygon(cfg, poly), out=ranges)
    ranges = np.where(ranges > cfg.range_max, cfg.range_max, ranges)
    return VirtualScan(ranges, cfg)


def camera_beams(intr, ext, stride=1):
    """Planar beams matching a camera's sampled pixels: ``(origin, bearings)``.

    Each pixel ray on the stride grid is projected onto the ground plane;
    the beam starts below the camera centre.  Rays pointing straight up or
    down are dropped.
    """
    u, v = stride_pixels(intr.width, intr.height, stride)
    xy = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones(u.shape)], axis=-1)
    d = xy @ ext.rotation.T
    keep = np.hypot(d[:, 0], d[:, 1]) > 1e-12
    return ext.translation[:2].copy(), np.arctan2(d[keep, 1], d[keep, 0])

"""Inflated occupancy grid and 8-connected Dijkstra path length."""

from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from ..errors import PathPlanningError
from .world import Box, Cylinder


def occupancy_grid(world, inflation, resolution, h_robot=math.inf):
    """Boolean grid (rows along y, columns along x) of cells the drive centre may not enter.

    A cell is occupied when its centre is within ``inflation`` of an obstacle
    footprint low enough to hit the robot, or of the world boundary.
    """
    x0, y0, x1, y1 = world.bounds
    nx = int(math.ceil((x1 - x0) / resolution))
    ny = int(math.ceil((y1 - y0) / resolution))
    xs = x0 + (np.arange(nx) + 0.5) * resolution
    ys = y0 + (np.arange(ny) + 0.5) * resolution
    X, Y = np.meshgrid(xs, ys)
    occ = (X - x0 < inflation) | (x1 - X < inflation) | (Y - y0 < inflation) | (y1 - Y < inflation)
    for o in world.obstacles:
        if not o.spans(0.0, h_robot):
            continue
        if isinstance(o, Cylinder):
            occ |= np.hypot(X - o.x, Y - o.y) < o.radius + inflation
        elif isinstance(o, Box):
            dx = np.maximum(np.abs(X - o.x) - o.hx, 0.0)
            dy = np.maximum(np.abs(Y - o.y) - o.hy, 0.0)
            occ |= np.hypot(dx, dy) < inflation
    return occ


def _cell(world, resolution, shape, x, y):
    x0, y0 = world.bounds[:2]
    i = min(int((y - y0) // resolution), shape[0] - 1)
    j = min(int((x - x0) // resolution), shape[1] - 1)
    return i, j


def grid_graph(occ, resolution):
    """Sparse adjacency of free cells; diagonals may not cut occupied corners."""
    ny, nx = occ.shape
    idx = np.arange(ny * nx).reshape(ny, nx)
    free = ~occ
    rows, cols, weights = [], [], []
    for di, dj in ((0, 1), (1, 0), (1, 1), (1, -1)):
        i0, i1 = max(0, -di), ny - max(0, di)
        j0, j1 = max(0, -dj), nx - max(0, dj)
        a = free[i0:i1, j0:j1]
        b = free[i0 + di : i1 + di, j0 + dj : j1 + dj]
        ok = a & b
        if di and dj:
            ok &= free[i0 + di : i1 + di, j0:j1] & free[i0:i1, j0 + dj : j1 + dj]
        src = idx[i0:i1, j0:j1][ok]
        dst = idx[i0 + di : i1 + di, j0 + dj : j1 + dj][ok]
        w = resolution * (math.sqrt(2.0) if di and dj else 1.0)
        rows.append(src)
        cols.append(dst)
        weights.append(np.full(src.shape, w))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    weights = np.concatenate(weights)
    n = ny * nx
    return coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsr()


def dijkstra_path_length(world, body, resolution=0.05):
    """Shortest start-goal path on the grid inflated by the body's circumscribed radius.

    Returns ``inf`` when the goal is unreachable.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    occ = occupancy_grid(world, body.circumscribed_radius, resolution, body.h_robot)
    s = _cell(world, resolution, occ.shape, world.start.x, world.start.y)
    g = _cell(world, resolution, occ.shape, *world.goal)
    if occ[s]:
        raise PathPlanningError("start cell is occupied after inflation")
    if occ[g]:
        raise PathPlanningError("goal cell is occupied after inflation")
    graph = grid_graph(occ, resolution)
    nx = occ.shape[1]
    dist = dijkstra(graph, directed=False, indices=s[0] * nx + s[1])
    return float(dist[g[0] * nx + g[1]])

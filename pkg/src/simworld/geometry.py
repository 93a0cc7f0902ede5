"""
Grid geometry: DDA raycasting, ray/disc intersection and cell traversal.
"""
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from utils.guards import check_finite, check_positive
from .types import OccupancyGrid, Pose2D


class OutOfGridError(ValueError):
    """A pose or ray origin lies outside the occupancy grid."""


def _start_cell(grid: OccupancyGrid, x: float, y: float):
    check_finite((x, y), 'ray origin')
    gx = (x - grid.origin.x) / grid.resolution
    gy = (y - grid.origin.y) / grid.resolution
    col, row = math.floor(gx), math.floor(gy)
    if not grid.in_bounds(row, col):
        raise OutOfGridError(f'point ({x:.3f}, {y:.3f}) is outside the grid')
    return gx, gy, row, col


def raycast_many(grid: OccupancyGrid, origin: Pose2D, angles, max_range: float,
                 occupied: Optional[np.ndarray] = None) -> np.ndarray:
    """Distance along each map-frame angle to the first occupied cell (p > 0.5).

    All rays are walked cell by cell together (Amanatides-Woo). Rays leaving
    the grid or reaching ``max_range`` return ``max_range``; a ray starting
    in an occupied cell returns 0.
    """
    check_positive(max_range, 'max_range')
    if occupied is None:
        occupied = grid.occupied_mask()
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    gx, gy, row0, col0 = _start_cell(grid, origin.x, origin.y)
    n = angles.size
    if occupied[row0, col0]:
        return np.zeros(n)

    res = grid.resolution
    dx, dy = np.cos(angles), np.sin(angles)
    step_c = np.where(dx > 0, 1, -1)
    step_r = np.where(dy > 0, 1, -1)
    with np.errstate(divide='ignore', invalid='ignore'):
        delta_x = np.where(dx != 0, res / np.abs(dx), np.inf)
        delta_y = np.where(dy != 0, res / np.abs(dy), np.inf)
        fx, fy = gx - col0, gy - row0
        t_max_x = np.where(dx != 0, np.where(dx > 0, 1.0 - fx, fx) * delta_x, np.inf)
        t_max_y = np.where(dy != 0, np.where(dy > 0, 1.0 - fy, fy) * delta_y, np.inf)

    cols = np.full(n, col0, dtype=np.int64)
    rows = np.full(n, row0, dtype=np.int64)
    result = np.full(n, float(max_range))
    active = np.arange(n)
    height, width = occupied.shape
    while active.size:
        cross_x = t_max_x[active] < t_max_y[active]
        t = np.where(cross_x, t_max_x[active], t_max_y[active])
        cols[active] += np.where(cross_x, step_c[active], 0)
        rows[active] += np.where(cross_x, 0, step_r[active])
        t_max_x[active] += np.where(cross_x, delta_x[active], 0.0)
        t_max_y[active] += np.where(cross_x, 0.0, delta_y[active])

        r, c = rows[active], cols[active]
        outside = (r < 0) | (r >= height) | (c < 0) | (c >= width)
        beyond = t >= max_range
        hit = np.zeros(active.size, dtype=bool)
        inside = ~outside & ~beyond
        hit[inside] = occupied[r[inside], c[inside]]
        result[active[hit]] = t[hit]
        active = active[~(outside | beyond | hit)]
    return result


def raycast(grid: OccupancyGrid, origin: Pose2D, angle: float, max_range: float,
            occupied: Optional[np.ndarray] = None) -> float:
    """Single-ray form of raycast_many (``angle`` is in the map frame)."""
    return float(raycast_many(grid, origin, [angle], max_range, occupied)[0])


def ray_circle_distance(ox: float, oy: float, angles, cx: float, cy: float, radius: float) -> np.ndarray:
    """First intersection distance of rays from (ox, oy) with a disc; inf when missed, 0 when inside."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    dx, dy = np.cos(angles), np.sin(angles)
    mx, my = ox - cx, oy - cy
    c = mx * mx + my * my - radius * radius
    if c <= 0.0:
        return np.zeros(angles.size)
    b = mx * dx + my * dy
    disc = b * b - c
    out = np.full(angles.size, np.inf)
    ok = (disc >= 0.0) & (b < 0.0)
    out[ok] = -b[ok] - np.sqrt(disc[ok])
    return out


def traverse_cells(grid: OccupancyGrid, x0: float, y0: float, x1: float, y1: float) -> List[Tuple[int, int]]:
    """Cells crossed by the segment from (x0, y0) to (x1, y1), start and end cell included.

    Cells outside the grid are skipped; the walk stops once it leaves the grid.
    """
    gx0 = (x0 - grid.origin.x) / grid.resolution
    gy0 = (y0 - grid.origin.y) / grid.resolution
    gx1 = (x1 - grid.origin.x) / grid.resolution
    gy1 = (y1 - grid.origin.y) / grid.resolution
    col, row = math.floor(gx0), math.floor(gy0)
    end_col, end_row = math.floor(gx1), math.floor(gy1)
    if not grid.in_bounds(row, col):
        raise OutOfGridError(f'segment start ({x0:.3f}, {y0:.3f}) is outside the grid')
    dx, dy = gx1 - gx0, gy1 - gy0
    step_c = 1 if dx > 0 else -1
    step_r = 1 if dy > 0 else -1
    delta_x = abs(1.0 / dx) if dx != 0 else math.inf
    delta_y = abs(1.0 / dy) if dy != 0 else math.inf
    t_max_x = ((col + 1 - gx0) if dx > 0 else (gx0 - col)) * delta_x if dx != 0 else math.inf
    t_max_y = ((row + 1 - gy0) if dy > 0 else (gy0 - row)) * delta_y if dy != 0 else math.inf

    cells = [(row, col)]
    # at most |dcol| + |drow| steps
    for _ in range(abs(end_col - col) + abs(end_row - row)):
        if t_max_x < t_max_y:
            col += step_c
            t_max_x += delta_x
        else:
            row += step_r
            t_max_y += delta_y
        if not grid.in_bounds(row, col):
            break
        cells.append((row, col))
        if row == end_row and col == end_col:
            break
    return cells


def fill_rect(grid: OccupancyGrid, rect: Sequence[float], logodds: float) -> None:
    """Set every cell whose centre lies in [x0, x1] x [y0, y1] (in place)."""
    x0, y0, x1, y1 = (float(v) for v in rect)
    xs, ys = grid.cell_centers()
    mask = (xs >= min(x0, x1)) & (xs <= max(x0, x1)) & (ys >= min(y0, y1)) & (ys <= max(y0, y1))
    grid.logodds[mask] = logodds


def disc_mask(grid: OccupancyGrid, cx: float, cy: float, radius: float) -> np.ndarray:
    xs, ys = grid.cell_centers()
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius

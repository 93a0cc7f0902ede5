"""
A* on the 8-connected occupancy grid.
"""
import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from simworld.geometry import OutOfGridError
from simworld.types import OccupancyGrid, Pose2D

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
# (d_row, d_col, diagonal)
MOVES = ((-1, -1, True), (-1, 0, False), (-1, 1, True), (0, -1, False),
         (0, 1, False), (1, -1, True), (1, 0, False), (1, 1, True))

Cell = Tuple[int, int]


class NoPath(RuntimeError):
    """The goal cannot be reached from the start."""


class StartInCollision(ValueError):
    """The start cell is blocked once obstacles are inflated."""


@dataclass
class PlanPath:
    """Cell-centre poses from start to goal; ``cost`` is in cell units (straight 1, diagonal sqrt 2)."""
    poses: List[Pose2D]
    cost: float
    cells: List[Cell] = field(default_factory=list)
    straight: int = 0
    diagonal: int = 0

    def __len__(self) -> int:
        return len(self.poses)

    def points(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.poses], dtype=float).reshape(-1, 2)

    def length_m(self, resolution: float) -> float:
        return self.cost * resolution


def octile(a: Cell, b: Cell) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (max(dr, dc) - min(dr, dc)) + SQRT2 * min(dr, dc)


def inflate(grid: OccupancyGrid, radius: float, hazards: Optional[Iterable[Cell]] = None) -> np.ndarray:
    """Blocked mask: occupied and hazard cells plus every cell within ``radius`` m of one."""
    obstacles = grid.occupied_mask().copy()
    for r, c in hazards or ():
        if grid.in_bounds(r, c):
            obstacles[r, c] = True
    if not obstacles.any():
        return obstacles
    if radius <= 0:
        return obstacles
    # compare in cells; radius / resolution is often a whole number of cells
    return distance_transform_edt(~obstacles) <= radius / grid.resolution + 1e-9


def _cell_of(grid: OccupancyGrid, pose: Pose2D, what: str) -> Cell:
    cell = grid.world_to_cell(pose.x, pose.y)
    if not grid.in_bounds(*cell):
        raise OutOfGridError(f'{what} ({pose.x:.3f}, {pose.y:.3f}) is outside the grid')
    return cell


def astar(blocked: np.ndarray, start: Cell, goal: Cell) -> Tuple[List[Cell], int, int]:
    """Optimal 8-connected path on a boolean blocked mask.

    Diagonal moves may not cut a blocked corner. Open-list ties break on
    (f, h, cell index). Returns (cells, straight_moves, diagonal_moves).
    """
    height, width = blocked.shape
    if blocked[start]:
        raise StartInCollision(f'start cell {start} is blocked')
    if blocked[goal]:
        raise NoPath(f'goal cell {goal} is blocked')
    best = {start: (0, 0)}
    parent = {start: None}
    h0 = octile(start, goal)
    open_list = [(h0, h0, start[0] * width + start[1], start)]
    closed = set()
    while open_list:
        _, _, _, cell = heapq.heappop(open_list)
        if cell in closed:
            continue
        if cell == goal:
            cells = []
            node = cell
            while node is not None:
                cells.append(node)
                node = parent[node]
            s, d = best[goal]
            return cells[::-1], s, d
        closed.add(cell)
        s, d = best[cell]
        r, c = cell
        for dr, dc, diag in MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < height and 0 <= nc < width) or blocked[nr, nc]:
                continue
            if diag and (blocked[r, nc] or blocked[nr, c]):
                continue
            nxt = (nr, nc)
            if nxt in closed:
                continue
            ns, nd = (s, d + 1) if diag else (s + 1, d)
            g = ns + SQRT2 * nd
            old = best.get(nxt)
            if old is not None and old[0] + SQRT2 * old[1] <= g:
                continue
            best[nxt] = (ns, nd)
            parent[nxt] = cell
            h = octile(nxt, goal)
            heapq.heappush(open_list, (g + h, h, nr * width + nc, nxt))
    raise NoPath(f'no path from {start} to {goal}')


def plan_global(grid: OccupancyGrid, start: Pose2D, goal: Pose2D, inflation_radius: float = 0.45,
                hazards: Optional[Iterable[Cell]] = None, blocked: Optional[np.ndarray] = None) -> PlanPath:
    """Plan from start to goal on the inflated grid.

    Args:
        grid: occupancy grid (p > 0.5 is an obstacle)
        start: start pose in the map frame
        goal: goal pose in the map frame
        inflation_radius: robot radius plus margin, in meters
        hazards: extra blocked cells (negative obstacles)
        blocked: precomputed blocked mask; overrides inflation when given

    Returns:
        PlanPath whose consecutive poses are 8-neighbour cell centres
    """
    start_cell = _cell_of(grid, start, 'start')
    goal_cell = _cell_of(grid, goal, 'goal')
    if blocked is None:
        blocked = inflate(grid, inflation_radius, hazards)
    cells, straight, diagonal = astar(blocked, start_cell, goal_cell)
    centres = [grid.cell_center(r, c) for r, c in cells]
    poses = []
    for i, (x, y) in enumerate(centres):
        if i + 1 < len(centres):
            nx, ny = centres[i + 1]
            theta = math.atan2(ny - y, nx - x)
        elif poses:
            theta = poses[-1].theta
        else:
            theta = goal.theta
        poses.append(Pose2D(x, y, theta))
    cost = straight + SQRT2 * diagonal
    logger.debug(f'A* path {start_cell} -> {goal_cell}: {len(cells)} cells, cost {cost:.2f}')
    return PlanPath(poses, cost, cells, straight, diagonal)

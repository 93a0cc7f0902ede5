"""
Log-odds occupancy mapping with known poses.
"""
from dataclasses import dataclass

import numpy as np

from simworld.geometry import OutOfGridError, traverse_cells
from simworld.types import LOGODDS_CLAMP, OccupancyGrid, Pose2D
from sensors.types import Scan2D

# pushes an end point off the cell boundary it was measured on, into the hit cell
HIT_EPSILON = 1e-6


@dataclass(frozen=True)
class MappingParams:
    l_free: float = -0.4
    l_occ: float = 0.85
    clamp: float = LOGODDS_CLAMP


def update_map(grid: OccupancyGrid, pose: Pose2D, scan: Scan2D, params: MappingParams = MappingParams()) -> OccupancyGrid:
    """Fold one scan into a copy of ``grid``.

    Every cell a beam passes through gets ``l_free`` once per scan; the cell
    holding a beam's end point gets ``l_occ`` (max-range beams have no hit).
    A cell that is both traversed and hit in the same scan counts as hit.
    """
    if not grid.contains(pose.x, pose.y):
        raise OutOfGridError(f'pose ({pose.x:.3f}, {pose.y:.3f}) is outside the grid')
    free, hits = set(), set()
    for angle, r in zip(scan.angles, scan.ranges):
        a = pose.theta + float(angle)
        hit = r < scan.max_range
        reach = float(r) + HIT_EPSILON if hit else float(scan.max_range)
        x1, y1 = pose.x + reach * np.cos(a), pose.y + reach * np.sin(a)
        cells = traverse_cells(grid, pose.x, pose.y, x1, y1)
        end = grid.world_to_cell(x1, y1)
        if hit and cells and cells[-1] == end:
            hits.add(end)
            free.update(cells[:-1])
        else:
            free.update(cells)
    free -= hits
    logodds = grid.logodds.copy()
    if free:
        rows, cols = zip(*free)
        logodds[list(rows), list(cols)] += params.l_free
    if hits:
        rows, cols = zip(*hits)
        logodds[list(rows), list(cols)] += params.l_occ
    np.clip(logodds, -params.clamp, params.clamp, out=logodds)
    return grid.with_logodds(logodds)

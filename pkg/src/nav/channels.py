"""
Negative obstacles from the inclined front scanner.
"""
import math
from typing import List, Optional, Tuple

import numpy as np

from simworld.types import OccupancyGrid, Pose2D
from sensors.lidar import TiltedScannerParams
from sensors.types import Scan2D

Cell = Tuple[int, int]


def detect_channels(tilted_scan: Scan2D, expected_ground_profile, pose: Optional[Pose2D] = None,
                    grid: Optional[OccupancyGrid] = None, params: TiltedScannerParams = TiltedScannerParams(),
                    threshold: float = 0.3) -> List[Cell]:
    """Ground cells where the inclined beams reach further than flat ground.

    A beam whose range exceeds the expected ground range by more than
    ``threshold`` looks into a hole; the cells between the expected ground
    point and the point where the beam finally hit are flagged. Shorter
    ranges (bumps, walls) are ignored. Without pose and grid the flagged
    beam indices are returned as ``(-1, index)`` pairs.
    """
    ranges = np.asarray(tilted_scan.ranges, dtype=float)
    expected = np.asarray(expected_ground_profile, dtype=float)
    if ranges.shape != expected.shape:
        raise ValueError(f'scan has {ranges.size} beams but the ground profile has {expected.size}')
    holes = (expected < tilted_scan.max_range) & (ranges > expected + threshold)
    if pose is None or grid is None:
        return [(-1, int(i)) for i in np.nonzero(holes)[0]]

    cos_tilt = math.cos(params.tilt)
    step = grid.resolution / 2.0
    cells = set()
    for i in np.nonzero(holes)[0]:
        psi = float(tilted_scan.angles[i])
        # horizontal distance of a point at slant range s along this beam
        scale = math.hypot(math.cos(psi) * cos_tilt, math.sin(psi))
        near, far = expected[i] * scale, ranges[i] * scale
        heading = pose.theta + math.atan2(math.sin(psi), math.cos(psi) * cos_tilt)
        for d in np.arange(near, far + 1e-9, step):
            x, y = pose.x + d * math.cos(heading), pose.y + d * math.sin(heading)
            cell = grid.world_to_cell(x, y)
            if grid.in_bounds(*cell):
                cells.add(cell)
    return sorted(cells)


def hazard_points(grid: OccupancyGrid, cells) -> np.ndarray:
    """Cell centres of hazard cells as (K, 2) map-frame points."""
    pts = [grid.cell_center(r, c) for r, c in cells if r >= 0]
    return np.array(pts, dtype=float).reshape(-1, 2)

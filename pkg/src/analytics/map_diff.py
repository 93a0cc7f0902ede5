"""
Change detection between two occupancy grids of the same area.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from simworld.types import OccupancyGrid

APPEARED = 'appeared'
DISAPPEARED = 'disappeared'
_STRUCTURE = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class ChangeRegion:
    polarity: str
    cells: int
    bbox: Tuple[int, int, int, int]
    bbox_xy: Tuple[float, float, float, float]
    centroid_xy: Tuple[float, float]


def diff_maps(a: OccupancyGrid, b: OccupancyGrid, min_blob_cells: int = 6,
              ignore: Optional[np.ndarray] = None) -> List[ChangeRegion]:
    """Blobs of cells whose occupancy crossed 0.5 from ``a`` to ``b``.

    Crossings are strict (p > 0.5 on one side, p < 0.5 on the other), so
    unknown cells never count. ``ignore`` masks cells out (for example cells
    near tracked agents). Bounding boxes are (row_min, col_min, row_max,
    col_max), inclusive.
    """
    if not a.same_geometry(b):
        raise ValueError(f'map geometry differs: {a.shape}@{a.resolution} {a.origin} vs '
                         f'{b.shape}@{b.resolution} {b.origin}')
    la, lb = a.logodds, b.logodds
    masks = {APPEARED: (la < 0) & (lb > 0), DISAPPEARED: (la > 0) & (lb < 0)}
    if ignore is not None:
        for key in masks:
            masks[key] &= ~ignore
    regions = []
    for polarity, mask in masks.items():
        labels, n = ndimage.label(mask, structure=_STRUCTURE)
        for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
            blob = labels[sl] == idx
            count = int(blob.sum())
            if count < min_blob_cells:
                continue
            r0, r1 = sl[0].start, sl[0].stop - 1
            c0, c1 = sl[1].start, sl[1].stop - 1
            rows, cols = np.nonzero(blob)
            cx, cy = a.cell_center(rows.mean() + r0, cols.mean() + c0)
            x0, y0 = a.cell_center(r0, c0)
            x1, y1 = a.cell_center(r1, c1)
            regions.append(ChangeRegion(polarity, count, (r0, c0, r1, c1), (x0, y0, x1, y1), (cx, cy)))
    regions.sort(key=lambda r: (r.polarity, r.bbox))
    return regions

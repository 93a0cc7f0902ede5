"""
Oil spill detection from UV fluorescence frame pairs.
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from sensors.types import FramePair

logger = logging.getLogger(__name__)

# 4-connectivity
_STRUCTURE = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class OilRegion:
    centroid_px: Tuple[float, float]
    area_px: int
    centroid_xy: Tuple[float, float]
    mean_contrast: float


def robust_threshold(diff: np.ndarray, k: float = 4.0, min_contrast: float = 0.05) -> float:
    """median + k * 1.4826 * MAD of the difference image, never below ``min_contrast``."""
    med = float(np.median(diff))
    mad = float(np.median(np.abs(diff - med)))
    return max(med + k * 1.4826 * mad, min_contrast)


def detect_oil(pair: FramePair, min_area_px: int = 4, k: float = 4.0, min_contrast: float = 0.05) -> List[OilRegion]:
    """Connected regions of the UV-minus-ambient image above a robust threshold, largest first."""
    diff = np.asarray(pair.uv, dtype=float) - np.asarray(pair.ambient, dtype=float)
    threshold = robust_threshold(diff, k, min_contrast)
    labels, n = ndimage.label(diff > threshold, structure=_STRUCTURE)
    if n == 0:
        return []
    points = pair.pixel_points()
    regions = []
    for idx in range(1, n + 1):
        mask = labels == idx
        area = int(mask.sum())
        if area < min_area_px:
            continue
        rows, cols = np.nonzero(mask)
        xy = points[mask].mean(axis=0)
        regions.append(OilRegion((float(rows.mean()), float(cols.mean())), area, (float(xy[0]), float(xy[1])),
                                 float(diff[mask].mean())))
    regions.sort(key=lambda r: -r.area_px)
    logger.debug(f'oil: threshold {threshold:.3f}, {len(regions)} regions')
    return regions

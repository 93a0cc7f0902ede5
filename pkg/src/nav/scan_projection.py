"""
3D cloud to planar scan.
"""
import math
from typing import Sequence

import numpy as np

from sensors.types import Scan2D


def pointcloud_to_scan(points, z_band: Sequence[float] = (0.1, 1.5), n_bins: int = 360,
                       max_range: float = 12.0, stamp: float = 0.0) -> Scan2D:
    """Keep points with z in z_band, bin by azimuth, take the nearest planar range per bin.

    Bin k is centred on -pi + k * 2pi / n_bins (the full-circle lidar beam
    angles); empty bins read max_range.
    """
    if n_bins < 8:
        raise ValueError(f'n_bins must be >= 8, got {n_bins}')
    width = 2.0 * math.pi / n_bins
    angles = -math.pi + np.arange(n_bins) * width
    ranges = np.full(n_bins, float(max_range))
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.size:
        keep = (pts[:, 2] >= z_band[0]) & (pts[:, 2] <= z_band[1])
        pts = pts[keep]
        r = np.hypot(pts[:, 0], pts[:, 1])
        az = np.arctan2(pts[:, 1], pts[:, 0])
        bins = np.mod(np.round((az + math.pi) / width).astype(np.int64), n_bins)
        ok = r < max_range
        np.minimum.at(ranges, bins[ok], r[ok])
    return Scan2D(angles, ranges, stamp, max_range)

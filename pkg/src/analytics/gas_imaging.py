"""
Concentration-length inversion of differential-absorption frame triples.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from simworld.types import Pose2D
from sensors.types import FrameTriple


@dataclass(eq=False)
class GasImage:
    """Per-pixel concentration length (ppm*m); invalid pixels hold 0."""
    cl: np.ndarray
    valid: np.ndarray
    stamp: float
    pose: Pose2D

    @property
    def total(self) -> float:
        return float(self.cl[self.valid].sum())

    def plume_pixels(self, threshold: float) -> int:
        return int(np.count_nonzero(self.valid & (self.cl > threshold)))


def concentration_length(triple: FrameTriple, dark_floor: float = 1.0,
                         delta_alpha: Optional[float] = None) -> GasImage:
    """CL = ln(mean(wing-, wing+) / centre) / delta_alpha, clipped at 0.

    Pixels where any of the three intensities is at or below ``dark_floor``
    are marked invalid.
    """
    delta_alpha = triple.delta_alpha if delta_alpha is None else delta_alpha
    if delta_alpha is None or not delta_alpha > 0:
        raise ValueError(f'delta_alpha must be > 0, got {delta_alpha!r}')
    wm = np.asarray(triple.wing_minus, dtype=float)
    c = np.asarray(triple.center, dtype=float)
    wp = np.asarray(triple.wing_plus, dtype=float)
    valid = (wm > dark_floor) & (c > dark_floor) & (wp > dark_floor)
    cl = np.zeros_like(c)
    ratio = 0.5 * (wm[valid] + wp[valid]) / c[valid]
    cl[valid] = np.maximum(np.log(ratio) / delta_alpha, 0.0)
    return GasImage(cl, valid, triple.stamp, triple.pose)

"""
Sensor message types.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from simworld.types import Pose2D


@dataclass(eq=False)
class Scan2D:
    """Planar range scan; angles are robot-frame radians, uniformly spaced."""
    angles: np.ndarray
    ranges: np.ndarray
    stamp: float
    max_range: float

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.ranges = np.asarray(self.ranges, dtype=float)
        if self.angles.shape != self.ranges.shape:
            raise ValueError(f'angles {self.angles.shape} and ranges {self.ranges.shape} differ')

    def __len__(self) -> int:
        return self.ranges.size

    @property
    def angle_increment(self) -> float:
        return float(self.angles[1] - self.angles[0]) if self.angles.size > 1 else 0.0

    def endpoints(self, valid_only: bool = True) -> np.ndarray:
        """Robot-frame (N, 2) beam end points, max-range beams dropped by default."""
        keep = self.ranges < self.max_range if valid_only else np.ones(self.ranges.size, dtype=bool)
        r, a = self.ranges[keep], self.angles[keep]
        return np.column_stack((r * np.cos(a), r * np.sin(a)))


ENOSE_CHANNELS = ('mox1', 'mox2', 'mox3', 'ndir', 'ec')


@dataclass(frozen=True)
class GasSample:
    """One e-nose reading; ``lag_state`` is the noise-free sensor state carried to the next sample."""
    stamp: float
    mox: Tuple[float, float, float]
    ndir_co2: float
    electrochemical: float
    humidity: float
    wind: Tuple[float, float]
    lag_state: Tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)

    def vector(self) -> np.ndarray:
        return np.array([*self.mox, self.ndir_co2, self.electrochemical], dtype=float)


@dataclass(eq=False)
class MicFrame:
    """Five-channel capture of the circular array; mic 0 points along the robot heading."""
    fs: float
    channels: np.ndarray
    stamp: float
    radius: float
    mic_angles: np.ndarray = field(default=None)

    def __post_init__(self):
        self.channels = np.atleast_2d(np.asarray(self.channels, dtype=float))
        n = self.channels.shape[0]
        if self.mic_angles is None:
            self.mic_angles = 2.0 * np.pi * np.arange(n) / n
        self.mic_angles = np.asarray(self.mic_angles, dtype=float)

    @property
    def n_mics(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    def positions(self) -> np.ndarray:
        """Robot-frame mic positions, shape (n_mics, 2)."""
        return self.radius * np.column_stack((np.cos(self.mic_angles), np.sin(self.mic_angles)))


def uca_radius(n_mics: int, spacing: float) -> float:
    """Radius of a uniform circular array with neighbour spacing ``spacing``."""
    return spacing / (2.0 * math.sin(math.pi / n_mics))


@dataclass(eq=False)
class FrameTriple:
    """Wing-, centre and wing+ intensity images of one gas-camera capture.

    Rows are elevations (top row first), columns azimuths (left first), both robot frame.
    """
    wing_minus: np.ndarray
    center: np.ndarray
    wing_plus: np.ndarray
    azimuths: np.ndarray
    elevations: np.ndarray
    stamp: float
    pose: Pose2D
    delta_alpha: float

    def __post_init__(self):
        shapes = {np.shape(self.wing_minus), np.shape(self.center), np.shape(self.wing_plus)}
        if len(shapes) != 1:
            raise ValueError(f'frame triple images differ in shape: {sorted(shapes)}')

    @property
    def shape(self) -> Tuple[int, int]:
        return self.center.shape


@dataclass(eq=False)
class FramePair:
    """UV camera ambient/illuminated pair; pixels are ground points (rows = range bins, cols = azimuth)."""
    ambient: np.ndarray
    uv: np.ndarray
    stamp: float
    ambient_level: float
    pose: Pose2D
    ranges: np.ndarray
    azimuths: np.ndarray

    def __post_init__(self):
        if np.shape(self.ambient) != np.shape(self.uv):
            raise ValueError('ambient and uv images differ in shape')
        if self.ambient_level < 0:
            raise ValueError(f'ambient_level must be >= 0, got {self.ambient_level}')

    def pixel_points(self) -> np.ndarray:
        """Map-frame ground point of every pixel, shape (rows, cols, 2)."""
        rr, aa = np.meshgrid(self.ranges, self.azimuths, indexing='ij')
        local = np.column_stack((rr.ravel() * np.cos(aa.ravel()), rr.ravel() * np.sin(aa.ravel())))
        return self.pose.to_world(local).reshape(rr.shape + (2,))


@dataclass(frozen=True)
class Detection:
    cls: str
    bearing: float
    range: float
    footprint_radius: float
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f'confidence must be in [0, 1], got {self.confidence}')
        if self.range <= 0:
            raise ValueError(f'range must be > 0, got {self.range}')


@dataclass(frozen=True)
class DetectionSet:
    stamp: float
    detections: Tuple[Detection, ...] = ()
    pose: Optional[Pose2D] = None

    def __len__(self) -> int:
        return len(self.detections)

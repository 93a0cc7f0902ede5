"""
UV fluorescence camera looking at the ground patch in front of the robot.

Pixels are ground points on a polar grid (rows = range bins, cols = azimuth).
The UV frame adds fluorescence of oil patches on top of the ambient frame,
falling off linearly to zero at range_limit and suppressed by daylight.
"""
import math
from dataclasses import dataclass

import numpy as np

from simworld.types import Pose2D, WorldState
from utils.rng import derive_rng
from .types import FramePair


@dataclass(frozen=True)
class UVCameraParams:
    rows: int = 24
    cols: int = 32
    r_min: float = 0.2
    r_max: float = 1.6
    fov: float = math.radians(60.0)
    range_limit: float = 1.0
    ambient_level: float = 0.0
    luminance: float = 0.3
    noise_sigma: float = 0.005


def falloff(r, range_limit: float):
    return np.clip(1.0 - np.asarray(r, dtype=float) / range_limit, 0.0, None)


def uv_capture(world: WorldState, pose: Pose2D, range_limit: float = 1.0,
               params: UVCameraParams = UVCameraParams(), ambient_level: float = None) -> FramePair:
    """Ambient/UV frame pair at the current pose.

    ``r`` in the falloff is the horizontal distance from the camera to the
    patch centre, so every pixel of one patch gets the same signal.
    """
    ambient_level = params.ambient_level if ambient_level is None else ambient_level
    ranges = np.linspace(params.r_min, params.r_max, params.rows)
    azimuths = np.linspace(params.fov / 2.0, -params.fov / 2.0, params.cols)
    texture = derive_rng(world.rng_seed, 'uv_texture').uniform(0.8, 1.0, size=(params.rows, params.cols))
    ambient = params.luminance * (1.0 + ambient_level) * texture
    pair = FramePair(ambient, ambient.copy(), world.time, ambient_level, pose, ranges, azimuths)
    points = pair.pixel_points()

    uv = ambient.copy()
    for patch in world.patches:
        r = math.hypot(patch.center[0] - pose.x, patch.center[1] - pose.y)
        if r > range_limit:
            continue
        inside = np.hypot(points[..., 0] - patch.center[0], points[..., 1] - patch.center[1]) <= patch.radius
        uv = uv + inside * (patch.fluorescence_gain * float(falloff(r, range_limit)) / (1.0 + ambient_level))

    if params.noise_sigma > 0:
        rng = derive_rng(world.rng_seed, 'uv', world.tick)
        ambient = ambient + rng.normal(0.0, params.noise_sigma, size=ambient.shape)
        uv = uv + rng.normal(0.0, params.noise_sigma, size=uv.shape)
    return FramePair(ambient, uv, world.time, ambient_level, pose, ranges, azimuths)

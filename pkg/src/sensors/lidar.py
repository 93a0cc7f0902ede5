"""
Range sensors: planar navigation scan, multi-ring 3D cloud and the tilted
ground scanner used for channel detection.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from simworld.geometry import raycast_many, ray_circle_distance
from simworld.types import Pose2D, WorldState
from utils.guards import check_positive
from utils.rng import derive_rng
from .types import Scan2D


@dataclass(frozen=True)
class LidarParams:
    n_beams: int = 360
    fov: float = 2.0 * math.pi
    max_range: float = 12.0
    noise_sigma: float = 0.0


@dataclass(frozen=True)
class PointCloudParams:
    rings: Tuple[float, ...] = (-15.0, -11.0, -7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0, 11.0, 15.0)
    n_azimuth: int = 360
    sensor_height: float = 0.6
    max_range: float = 12.0
    noise_sigma: float = 0.0


@dataclass(frozen=True)
class TiltedScannerParams:
    """Inclined line scanner; the default tilt puts flat ground 2 m ahead."""
    height: float = 0.8
    tilt: float = math.atan2(0.8, 2.0)
    n_beams: int = 61
    fov: float = math.radians(60.0)
    max_range: float = 6.0
    step: float = 0.01


def beam_angles(n_beams: int, fov: float) -> np.ndarray:
    """Robot-frame beam angles: -pi + k*2pi/n for a full circle, else fov/2 edge to edge."""
    if n_beams < 2:
        raise ValueError(f'n_beams must be >= 2, got {n_beams}')
    if fov >= 2.0 * math.pi - 1e-12:
        return -math.pi + np.arange(n_beams) * (2.0 * math.pi / n_beams)
    return np.linspace(-fov / 2.0, fov / 2.0, n_beams)


def _agent_ranges(world: WorldState, pose: Pose2D, world_angles: np.ndarray) -> np.ndarray:
    out = np.full(world_angles.size, np.inf)
    for agent in world.agents:
        out = np.minimum(out, ray_circle_distance(pose.x, pose.y, world_angles, agent.position[0],
                                                  agent.position[1], agent.footprint_radius))
    return out


def lidar_scan(world: WorldState, pose: Pose2D, n_beams: int = 360, fov: float = 2.0 * math.pi,
               max_range: float = 12.0, noise_sigma: float = 0.0) -> Scan2D:
    """Planar scan against the static grid and agent footprints.

    Range noise is Gaussian, drawn from (seed, 'lidar', tick) and clamped to [0, max_range].
    """
    check_positive(max_range, 'max_range')
    angles = beam_angles(n_beams, fov)
    world_angles = pose.theta + angles
    ranges = raycast_many(world.grid, pose, world_angles, max_range)
    ranges = np.minimum(ranges, _agent_ranges(world, pose, world_angles))
    if noise_sigma > 0:
        rng = derive_rng(world.rng_seed, 'lidar', world.tick)
        ranges = ranges + rng.normal(0.0, noise_sigma, size=ranges.size)
    return Scan2D(angles, np.clip(ranges, 0.0, max_range), world.time, max_range)


def lidar_scan_with(world: WorldState, pose: Pose2D, params: LidarParams) -> Scan2D:
    return lidar_scan(world, pose, params.n_beams, params.fov, params.max_range, params.noise_sigma)


def lidar_pointcloud(world: WorldState, pose: Pose2D, params: PointCloudParams = PointCloudParams()) -> np.ndarray:
    """Robot-frame (N, 3) cloud, z above ground.

    Walls are unbounded in height, agents are cylinders of their class height
    and downward rings hit flat ground. Returns beyond max_range are dropped.
    """
    azimuths = -math.pi + np.arange(params.n_azimuth) * (2.0 * math.pi / params.n_azimuth)
    world_angles = pose.theta + azimuths
    wall = raycast_many(world.grid, pose, world_angles, params.max_range)
    h = params.sensor_height
    agents = [(a, ray_circle_distance(pose.x, pose.y, world_angles, a.position[0], a.position[1],
                                      a.footprint_radius)) for a in world.agents]
    points = []
    for ring_deg in params.rings:
        elev = math.radians(ring_deg)
        tan_e = math.tan(elev)
        horiz = wall.copy()
        if elev < 0:
            horiz = np.minimum(horiz, h / -tan_e)
        for agent, d in agents:
            z = h + d * tan_e
            hit = np.isfinite(d) & (z >= 0.0) & (z <= agent.height)
            horiz = np.where(hit, np.minimum(horiz, d), horiz)
        keep = horiz / math.cos(elev) < params.max_range - 1e-9
        hz = horiz[keep]
        points.append(np.column_stack((hz * np.cos(azimuths[keep]), hz * np.sin(azimuths[keep]),
                                       h + hz * tan_e)))
    cloud = np.vstack(points) if points else np.zeros((0, 3))
    if params.noise_sigma > 0 and cloud.size:
        rng = derive_rng(world.rng_seed, 'pointcloud', world.tick)
        cloud = cloud + rng.normal(0.0, params.noise_sigma, size=cloud.shape)
    return cloud


def _tilted_directions(params: TiltedScannerParams, angles: np.ndarray):
    cb, sb = math.cos(params.tilt), math.sin(params.tilt)
    return np.cos(angles) * cb, np.sin(angles), -np.cos(angles) * sb


def expected_ground_profile(params: TiltedScannerParams = TiltedScannerParams()) -> np.ndarray:
    """Per-beam range to flat ground (max_range where the beam never reaches it)."""
    angles = beam_angles(params.n_beams, params.fov)
    _, _, dz = _tilted_directions(params, angles)
    with np.errstate(divide='ignore'):
        ground = np.where(dz < 0, params.height / -dz, np.inf)
    return np.minimum(ground, params.max_range)


def tilted_scan(world: WorldState, pose: Pose2D, params: TiltedScannerParams = TiltedScannerParams(),
                noise_sigma: float = 0.0) -> Scan2D:
    """Inclined scanner: beams march until they pass below the local ground (channel floors) or enter a wall."""
    angles = beam_angles(params.n_beams, params.fov)
    dx, dy, dz = _tilted_directions(params, angles)
    s = np.arange(1, int(params.max_range / params.step) + 1) * params.step
    lx = s[None, :] * dx[:, None]
    ly = s[None, :] * dy[:, None]
    z = params.height + s[None, :] * dz[:, None]
    c, si = math.cos(pose.theta), math.sin(pose.theta)
    wx, wy = pose.x + c * lx - si * ly, pose.y + si * lx + c * ly
    grid = world.grid
    rows, cols = grid.cells_of(np.column_stack((wx.ravel(), wy.ravel())))
    inside = (rows >= 0) & (rows < grid.height) & (cols >= 0) & (cols < grid.width)
    depth = np.zeros(rows.size)
    wall = np.zeros(rows.size, dtype=bool)
    depth[inside] = grid.ground_depth[rows[inside], cols[inside]]
    wall[inside] = grid.occupied_mask()[rows[inside], cols[inside]]
    hit = (z.ravel() <= -depth) | wall
    hit = hit.reshape(z.shape)
    first = np.argmax(hit, axis=1)
    ranges = np.where(hit.any(axis=1), s[first], params.max_range)
    if noise_sigma > 0:
        rng = derive_rng(world.rng_seed, 'tilted', world.tick)
        ranges = ranges + rng.normal(0.0, noise_sigma, size=ranges.size)
    return Scan2D(angles, np.clip(ranges, 0.0, params.max_range), world.time, params.max_range)

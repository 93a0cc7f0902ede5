"""
Monte Carlo localization against a known occupancy map.

Odometry motion model (alpha1..alpha4), likelihood-field measurement model
over a precomputed distance field, low-variance resampling with roughening,
and a small share of uniform particles injected every update so a kidnapped
robot can recover.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from simworld.types import OccupancyGrid, Pose2D
from simworld.world import odometry_components
from sensors.types import Scan2D
from utils.guards import check_positive, check_range, wrap_angles

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MclParams:
    n_particles: int = 500
    alpha1: float = 0.05
    alpha2: float = 0.05
    alpha3: float = 0.05
    alpha4: float = 0.05
    z_hit: float = 0.9
    z_rand: float = 0.1
    sigma_hit: float = 0.2
    max_distance: float = 2.0
    max_beams: int = 60
    measurement_exponent: float = 0.25
    injection_ratio: float = 0.01
    jitter_xy: float = 0.03
    jitter_theta: float = 0.02
    cluster_bin: float = 1.0
    jump_limit: float = 1.0

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError(f'n_particles must be >= 1, got {self.n_particles}')
        check_positive(self.sigma_hit, 'sigma_hit')
        check_range(self.injection_ratio, 0.0, 0.5, 'injection_ratio')
        if self.max_beams < 1:
            raise ValueError(f'max_beams must be >= 1, got {self.max_beams}')


@dataclass(eq=False)
class ParticleSet:
    """N weighted pose hypotheses; ``poses`` is (N, 3) [x, y, theta]."""
    poses: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.poses.shape[0],):
            raise ValueError('one weight per particle is required')

    def __len__(self) -> int:
        return self.poses.shape[0]

    @classmethod
    def uniform(cls, grid: OccupancyGrid, n: int, rng: np.random.Generator) -> 'ParticleSet':
        return cls(sample_free_poses(grid, n, rng), np.full(n, 1.0 / n))

    @classmethod
    def gaussian(cls, pose: Pose2D, sigma: Tuple[float, float, float], n: int,
                 rng: np.random.Generator) -> 'ParticleSet':
        poses = np.column_stack((rng.normal(pose.x, sigma[0], n),
                                 rng.normal(pose.y, sigma[1], n),
                                 wrap_angles(rng.normal(pose.theta, sigma[2], n))))
        return cls(poses, np.full(n, 1.0 / n))

    def effective_size(self) -> float:
        return float(1.0 / np.sum(self.weights ** 2))


@dataclass(eq=False)
class MclResult:
    particles: ParticleSet
    estimate: Pose2D
    covariance: np.ndarray
    n_eff: float
    resampled: bool = False
    diverged: bool = False
    relocalized: bool = False

    @property
    def flagged(self) -> bool:
        return self.diverged or self.relocalized


def sample_free_poses(grid: OccupancyGrid, n: int, rng: np.random.Generator) -> np.ndarray:
    """Poses drawn uniformly over known-free cells with uniform heading."""
    rows, cols = np.nonzero(grid.logodds < 0.0)
    if rows.size == 0:
        raise ValueError('map has no free cells to sample particles from')
    pick = rng.integers(0, rows.size, n)
    res = grid.resolution
    xs = grid.origin.x + (cols[pick] + rng.random(n)) * res
    ys = grid.origin.y + (rows[pick] + rng.random(n)) * res
    return np.column_stack((xs, ys, rng.uniform(-math.pi, math.pi, n)))


class LikelihoodField:
    """Distance (m) from every cell to the nearest occupied cell, capped at ``max_distance``."""

    def __init__(self, grid: OccupancyGrid, max_distance: float = 2.0):
        self.grid = grid
        self.max_distance = max_distance
        occupied = grid.occupied_mask()
        if occupied.any():
            dist = distance_transform_edt(~occupied) * grid.resolution
        else:
            dist = np.full(grid.shape, max_distance)
        self.distance = np.minimum(dist, max_distance)

    def lookup(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        g = self.grid
        cols = np.floor((xs - g.origin.x) / g.resolution).astype(np.int64)
        rows = np.floor((ys - g.origin.y) / g.resolution).astype(np.int64)
        inside = (rows >= 0) & (rows < g.height) & (cols >= 0) & (cols < g.width)
        out = np.full(xs.shape, self.max_distance)
        out[inside] = self.distance[rows[inside], cols[inside]]
        return out


def sample_motion(poses: np.ndarray, odom_delta: Pose2D, params: MclParams, rng: np.random.Generator) -> np.ndarray:
    rot1, trans, rot2 = odometry_components(odom_delta)
    n = poses.shape[0]
    sd_rot1 = math.sqrt(params.alpha1 * rot1 ** 2 + params.alpha2 * trans ** 2)
    sd_trans = math.sqrt(params.alpha3 * trans ** 2 + params.alpha4 * (rot1 ** 2 + rot2 ** 2))
    sd_rot2 = math.sqrt(params.alpha1 * rot2 ** 2 + params.alpha2 * trans ** 2)
    r1 = rot1 - (rng.normal(0.0, sd_rot1, n) if sd_rot1 > 0 else 0.0)
    tr = trans - (rng.normal(0.0, sd_trans, n) if sd_trans > 0 else 0.0)
    r2 = rot2 - (rng.normal(0.0, sd_rot2, n) if sd_rot2 > 0 else 0.0)
    heading = poses[:, 2] + r1
    out = poses.copy()
    out[:, 0] += tr * np.cos(heading)
    out[:, 1] += tr * np.sin(heading)
    out[:, 2] = wrap_angles(heading + r2)
    return out


def beam_subset(scan: Scan2D, max_beams: int) -> np.ndarray:
    valid = np.nonzero(scan.ranges < scan.max_range)[0]
    if valid.size <= max_beams:
        return valid
    pick = np.unique(np.round(np.linspace(0, valid.size - 1, max_beams)).astype(np.int64))
    return valid[pick]


def scan_log_likelihood(poses: np.ndarray, scan: Scan2D, field: LikelihoodField, params: MclParams) -> np.ndarray:
    """Per-particle log-likelihood of the scan, tempered by ``measurement_exponent``."""
    idx = beam_subset(scan, params.max_beams)
    if idx.size == 0:
        return np.zeros(poses.shape[0])
    r, a = scan.ranges[idx], scan.angles[idx]
    heading = poses[:, 2:3] + a[None, :]
    xs = poses[:, 0:1] + r[None, :] * np.cos(heading)
    ys = poses[:, 1:2] + r[None, :] * np.sin(heading)
    d = field.lookup(xs, ys)
    p = params.z_hit * np.exp(-0.5 * (d / params.sigma_hit) ** 2) + params.z_rand / scan.max_range
    return params.measurement_exponent * np.log(p).sum(axis=1)


def low_variance_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side='left')


def circular_mean(angles: np.ndarray, weights: np.ndarray) -> float:
    return math.atan2(float(np.sum(weights * np.sin(angles))), float(np.sum(weights * np.cos(angles))))


def cluster_estimate(poses: np.ndarray, weights: np.ndarray, bin_size: float) -> Pose2D:
    """Weighted mean of the heaviest particle cluster (bins of ``bin_size`` m, 3x3 neighbourhood)."""
    bx = np.floor(poses[:, 0] / bin_size).astype(np.int64)
    by = np.floor(poses[:, 1] / bin_size).astype(np.int64)
    bx0, by0 = bx.min(), by.min()
    hist = np.zeros((by.max() - by0 + 3, bx.max() - bx0 + 3))
    np.add.at(hist, (by - by0 + 1, bx - bx0 + 1), weights)
    summed = sum(np.roll(np.roll(hist, dr, axis=0), dc, axis=1) for dr in (-1, 0, 1) for dc in (-1, 0, 1))
    row, col = np.unravel_index(int(np.argmax(summed)), summed.shape)
    cy, cx = row - 1 + by0, col - 1 + bx0
    member = (np.abs(bx - cx) <= 1) & (np.abs(by - cy) <= 1)
    w = weights[member]
    w = w / w.sum()
    p = poses[member]
    return Pose2D(float(np.sum(w * p[:, 0])), float(np.sum(w * p[:, 1])), circular_mean(p[:, 2], w))


def particle_covariance(poses: np.ndarray, weights: np.ndarray) -> np.ndarray:
    mean_xy = weights @ poses[:, :2]
    dev = np.empty_like(poses)
    dev[:, :2] = poses[:, :2] - mean_xy
    dev[:, 2] = wrap_angles(poses[:, 2] - circular_mean(poses[:, 2], weights))
    return (dev * weights[:, None]).T @ dev


def mcl_update(ps: ParticleSet, odom_delta: Pose2D, scan: Scan2D, grid: OccupancyGrid,
               params: MclParams = MclParams(), rng: Optional[np.random.Generator] = None,
               field: Optional[LikelihoodField] = None, previous: Optional[Pose2D] = None) -> MclResult:
    """One filter step.

    Args:
        ps: particle set from the previous step
        odom_delta: robot-frame odometry delta since the previous step
        scan: robot-frame 2D scan
        grid: the known map
        params: filter parameters
        rng: generator for motion noise, resampling and injection
        field: precomputed likelihood field for ``grid`` (built when omitted)
        previous: previous estimate, used to flag jumps larger than ``jump_limit``

    Returns:
        MclResult with the new particle set, pose estimate and 3x3 covariance
    """
    rng = rng if rng is not None else np.random.default_rng()
    field = field if field is not None else LikelihoodField(grid, params.max_distance)
    n = len(ps)

    poses = sample_motion(ps.poses, odom_delta, params, rng)
    log_w = np.log(np.maximum(ps.weights, 1e-300)) + scan_log_likelihood(poses, scan, field, params)
    diverged = False
    if not np.all(np.isfinite(log_w)):
        weights = np.zeros(n)
    else:
        weights = np.exp(log_w - log_w.max())
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        logger.warning('MCL weights collapsed; resetting to uniform')
        weights = np.full(n, 1.0 / n)
        diverged = True
    else:
        weights = weights / total

    n_eff = float(1.0 / np.sum(weights ** 2))
    resampled = n_eff < n / 2.0
    if resampled:
        idx = low_variance_resample(weights, rng)
        poses = poses[idx]
        poses[:, 0] += rng.normal(0.0, params.jitter_xy, n)
        poses[:, 1] += rng.normal(0.0, params.jitter_xy, n)
        poses[:, 2] = wrap_angles(poses[:, 2] + rng.normal(0.0, params.jitter_theta, n))
        weights = np.full(n, 1.0 / n)

    k = int(math.ceil(params.injection_ratio * n)) if params.injection_ratio > 0 else 0
    if k:
        slots = rng.choice(n, size=min(k, n), replace=False)
        poses[slots] = sample_free_poses(grid, slots.size, rng)
        weights[slots] = 1.0 / n
        weights = weights / weights.sum()

    estimate = cluster_estimate(poses, weights, params.cluster_bin)
    covariance = particle_covariance(poses, weights)
    relocalized = previous is not None and previous.distance_to(estimate) > params.jump_limit
    if relocalized:
        logger.info(f'MCL estimate jumped {previous.distance_to(estimate):.2f} m')
    logger.debug(f'MCL n_eff={n_eff:.1f} resampled={resampled} estimate=({estimate.x:.2f}, {estimate.y:.2f})')
    return MclResult(ParticleSet(poses, weights), estimate, covariance, n_eff, resampled, diverged, relocalized)

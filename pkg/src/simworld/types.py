"""
Value types of the simulated plant.

Every type is an immutable dataclass; the world advances by building new
values (see world.step_world), which keeps runs bit-reproducible and lets a
snapshot be handed to sensor code on any thread.
"""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from utils.guards import check_finite, check_positive, check_range, wrap_angle

LOGODDS_CLAMP = 10.0
NYQUIST_HZ = 48000.0


class Species(str, enum.Enum):
    METHANE = 'methane'
    CO2 = 'co2'
    VOC = 'voc'


class AgentClass(str, enum.Enum):
    PEDESTRIAN = 'pedestrian'
    CAR = 'car'
    TRUCK = 'truck'


class WaveformKind(str, enum.Enum):
    TONE = 'tone'
    MULTITONE = 'multitone'
    BROADBAND = 'broadband'


@dataclass(frozen=True)
class Pose2D:
    """Planar pose, theta kept in (-pi, pi]."""
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        check_finite((self.x, self.y, self.theta), 'pose')
        object.__setattr__(self, 'x', float(self.x))
        object.__setattr__(self, 'y', float(self.y))
        object.__setattr__(self, 'theta', wrap_angle(self.theta))

    def compose(self, delta: 'Pose2D') -> 'Pose2D':
        """Apply a delta expressed in this pose's frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(self.x + c * delta.x - s * delta.y,
                      self.y + s * delta.x + c * delta.y,
                      self.theta + delta.theta)

    def between(self, other: 'Pose2D') -> 'Pose2D':
        """Delta d such that self.compose(d) == other."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        dx, dy = other.x - self.x, other.y - self.y
        return Pose2D(c * dx + s * dy, -s * dx + c * dy, wrap_angle(other.theta - self.theta))

    def distance_to(self, other: 'Pose2D') -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def to_world(self, points) -> np.ndarray:
        """Robot-frame (N, 2) points to map frame."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.column_stack((self.x + c * pts[:, 0] - s * pts[:, 1],
                                self.y + s * pts[:, 0] + c * pts[:, 1]))

    def to_local(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        c, s = math.cos(self.theta), math.sin(self.theta)
        dx, dy = pts[:, 0] - self.x, pts[:, 1] - self.y
        return np.column_stack((c * dx + s * dy, -s * dx + c * dy))

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.theta)


@dataclass(frozen=True)
class Twist:
    v: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        check_finite((self.v, self.omega), 'twist')

    def clipped(self, v_max: float, omega_max: float) -> 'Twist':
        return Twist(min(max(self.v, -v_max), v_max), min(max(self.omega, -omega_max), omega_max))

    @property
    def is_zero(self) -> bool:
        return self.v == 0.0 and self.omega == 0.0


@dataclass(frozen=True)
class KinematicLimits:
    v_max: float = 1.0
    omega_max: float = 1.5
    a_max: float = 1.0
    alpha_max: float = 3.0


@dataclass(frozen=True)
class OdometryNoise:
    """Four-parameter odometry model (rot/rot, rot/trans, trans/trans, trans/rot)."""
    alpha1: float = 0.0
    alpha2: float = 0.0
    alpha3: float = 0.0
    alpha4: float = 0.0

    def __post_init__(self):
        for name in ('alpha1', 'alpha2', 'alpha3', 'alpha4'):
            check_positive(getattr(self, name), name, allow_zero=True)

    @property
    def is_zero(self) -> bool:
        return not (self.alpha1 or self.alpha2 or self.alpha3 or self.alpha4)


@dataclass(eq=False)
class OccupancyGrid:
    """Log-odds occupancy grid.

    Cells are indexed ``[row, col]`` = ``[y, x]``; ``origin`` is the map-frame
    position of the outer corner of cell (0, 0) and must be axis aligned.
    ``ground_depth`` holds the depth (m) of negative obstacles such as sewage
    channels; it is zero on flat ground.
    """
    resolution: float
    logodds: np.ndarray
    origin: Pose2D = field(default_factory=Pose2D)
    ground_depth: Optional[np.ndarray] = None

    def __post_init__(self):
        check_positive(self.resolution, 'resolution')
        self.logodds = np.clip(np.asarray(self.logodds, dtype=float), -LOGODDS_CLAMP, LOGODDS_CLAMP)
        if self.logodds.ndim != 2:
            raise ValueError(f'logodds must be 2-D, got shape {self.logodds.shape}')
        if self.origin.theta != 0.0:
            raise ValueError('grid origin must be axis aligned (theta = 0)')
        if self.ground_depth is None:
            self.ground_depth = np.zeros_like(self.logodds)
        else:
            self.ground_depth = np.asarray(self.ground_depth, dtype=float)
            if self.ground_depth.shape != self.logodds.shape:
                raise ValueError('ground_depth must match the grid shape')

    @classmethod
    def empty(cls, width: int, height: int, resolution: float, origin: Optional[Pose2D] = None,
              logodds: float = 0.0) -> 'OccupancyGrid':
        return cls(resolution, np.full((int(height), int(width)), float(logodds)), origin or Pose2D())

    @classmethod
    def from_probability(cls, prob, resolution: float, origin: Optional[Pose2D] = None) -> 'OccupancyGrid':
        p = np.clip(np.asarray(prob, dtype=float), 1e-6, 1.0 - 1e-6)
        return cls(resolution, np.log(p / (1.0 - p)), origin or Pose2D())

    @classmethod
    def from_bitmap(cls, pixels, resolution: float, origin: Optional[Pose2D] = None) -> 'OccupancyGrid':
        """8-bit grayscale image (0 = occupied, 255 = free), first image row = top of the map."""
        img = np.asarray(pixels, dtype=float)
        if img.ndim == 3:
            img = img[..., :3].mean(axis=2)
        p = 1.0 - np.flipud(img) / 255.0
        return cls.from_probability(p, resolution, origin)

    @property
    def width(self) -> int:
        return self.logodds.shape[1]

    @property
    def height(self) -> int:
        return self.logodds.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.logodds.shape

    def probability(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.logodds))

    def occupied_mask(self) -> np.ndarray:
        # p > 0.5 <=> logodds > 0
        return self.logodds > 0.0

    def to_bitmap(self) -> np.ndarray:
        return np.flipud(np.round((1.0 - self.probability()) * 255.0)).astype(np.uint8)

    def world_to_cell(self, x: float, y: float) -> Tuple[int, int]:
        col = math.floor((x - self.origin.x) / self.resolution)
        row = math.floor((y - self.origin.y) / self.resolution)
        return row, col

    def cells_of(self, xy) -> Tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(xy, dtype=float).reshape(-1, 2)
        cols = np.floor((pts[:, 0] - self.origin.x) / self.resolution).astype(np.int64)
        rows = np.floor((pts[:, 1] - self.origin.y) / self.resolution).astype(np.int64)
        return rows, cols

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        return (self.origin.x + (col + 0.5) * self.resolution,
                self.origin.y + (row + 0.5) * self.resolution)

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Meshgrid (xs, ys) of all cell centres, shape (height, width)."""
        xs = self.origin.x + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin.y + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def contains(self, x: float, y: float) -> bool:
        return self.in_bounds(*self.world_to_cell(x, y))

    def extent(self) -> Tuple[float, float, float, float]:
        return (self.origin.x, self.origin.y,
                self.origin.x + self.width * self.resolution,
                self.origin.y + self.height * self.resolution)

    def same_geometry(self, other: 'OccupancyGrid') -> bool:
        return (self.shape == other.shape and self.resolution == other.resolution
                and self.origin == other.origin)

    def copy(self) -> 'OccupancyGrid':
        return OccupancyGrid(self.resolution, self.logodds.copy(), self.origin, self.ground_depth.copy())

    def with_logodds(self, logodds: np.ndarray) -> 'OccupancyGrid':
        return OccupancyGrid(self.resolution, logodds, self.origin, self.ground_depth.copy())


@dataclass(frozen=True)
class GasPlume:
    """Continuous point-source leak. ``wind`` is (speed m/s, direction the wind blows toward)."""
    source: Tuple[float, float]
    emission_rate: float
    wind: Tuple[float, float] = (1.0, 0.0)
    species: Species = Species.METHANE
    height: float = 0.0
    id: str = 'plume'

    def __post_init__(self):
        object.__setattr__(self, 'species', Species(self.species))
        object.__setattr__(self, 'source', tuple(float(v) for v in self.source))
        object.__setattr__(self, 'wind', tuple(float(v) for v in self.wind))
        check_finite(self.source, 'plume source')
        check_positive(self.emission_rate, 'emission_rate', allow_zero=True)
        check_positive(self.wind[0], 'wind speed', allow_zero=True)
        check_finite(self.wind[1], 'wind direction')
        check_positive(self.height, 'plume height', allow_zero=True)


@dataclass(frozen=True)
class Waveform:
    """Source signal descriptor, rendered by acoustics.render_waveform.

    ``noise_level`` scales a seeded broadband component; when ``burst_period``
    is set that component is gated on for ``burst_duty`` of each period.
    """
    kind: WaveformKind = WaveformKind.TONE
    freqs: Tuple[float, ...] = (440.0,)
    amplitudes: Tuple[float, ...] = ()
    seed: int = 0
    noise_level: float = 0.0
    burst_period: float = 0.0
    burst_duty: float = 1.0

    def __post_init__(self):
        kind = WaveformKind(self.kind)
        object.__setattr__(self, 'kind', kind)
        freqs = tuple(float(f) for f in self.freqs)
        if kind is WaveformKind.BROADBAND:
            freqs = ()
        elif not freqs:
            raise ValueError(f'{kind.value} waveform needs at least one frequency')
        elif kind is WaveformKind.TONE and len(freqs) != 1:
            raise ValueError('tone waveform takes exactly one frequency')
        for f in freqs:
            check_range(f, 0.0, NYQUIST_HZ, 'tone frequency', low_open=True, high_open=True)
        object.__setattr__(self, 'freqs', freqs)
        amps = tuple(float(a) for a in self.amplitudes) or tuple(1.0 for _ in freqs)
        if len(amps) != len(freqs):
            raise ValueError('amplitudes must match freqs')
        object.__setattr__(self, 'amplitudes', amps)
        if kind is WaveformKind.BROADBAND and self.noise_level == 0.0:
            object.__setattr__(self, 'noise_level', 1.0)
        check_positive(self.noise_level, 'noise_level', allow_zero=True)
        check_positive(self.burst_period, 'burst_period', allow_zero=True)
        check_range(self.burst_duty, 0.0, 1.0, 'burst_duty', low_open=True)


@dataclass(frozen=True)
class AcousticSource:
    position: Tuple[float, float]
    waveform: Waveform
    level: float = 1.0
    anomalous: bool = False
    category: str = 'pump'
    id: str = 'source'

    def __post_init__(self):
        object.__setattr__(self, 'position', tuple(float(v) for v in self.position))
        check_finite(self.position, 'source position')
        check_positive(self.level, 'level')


@dataclass(frozen=True)
class OilPatch:
    center: Tuple[float, float]
    radius: float
    fluorescence_gain: float = 1.0
    id: str = 'patch'

    def __post_init__(self):
        object.__setattr__(self, 'center', tuple(float(v) for v in self.center))
        check_positive(self.radius, 'radius')
        check_range(self.fluorescence_gain, 0.0, 1.0, 'fluorescence_gain', low_open=True)


AGENT_HEIGHTS: Dict[AgentClass, float] = {
    AgentClass.PEDESTRIAN: 1.7,
    AgentClass.CAR: 1.5,
    AgentClass.TRUCK: 3.0,
}


@dataclass(frozen=True)
class DynamicAgent:
    """Agent driving a cyclic waypoint loop; ``target`` is the index it is heading to."""
    id: str
    footprint_radius: float
    waypoints: Tuple[Tuple[float, float], ...]
    speed: float
    agent_class: AgentClass = AgentClass.PEDESTRIAN
    position: Optional[Tuple[float, float]] = None
    target: int = 1
    velocity: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, 'agent_class', AgentClass(self.agent_class))
        wps = tuple((float(p[0]), float(p[1])) for p in self.waypoints)
        if not wps:
            raise ValueError(f'agent {self.id!r} needs at least one waypoint')
        object.__setattr__(self, 'waypoints', wps)
        check_positive(self.footprint_radius, 'footprint_radius')
        check_positive(self.speed, 'speed', allow_zero=True)
        if self.position is None:
            object.__setattr__(self, 'position', wps[0])
        object.__setattr__(self, 'target', self.target % len(wps))

    @property
    def height(self) -> float:
        return AGENT_HEIGHTS[self.agent_class]


@dataclass(frozen=True)
class ScheduleEvent:
    """Change applied when sim time crosses ``at``: wind (target='wind') or a plume's rate."""
    at: float
    target: str
    values: Tuple[Tuple[str, float], ...]

    def as_dict(self) -> Dict[str, float]:
        return dict(self.values)


@dataclass(frozen=True)
class WorldParams:
    dt: float = 0.05
    wind_meander_amplitude: float = 0.15
    wind_meander_period: float = 7.0
    gust_amplitude: float = 0.2
    gust_period: float = 4.3
    humidity: float = 55.0
    ambient_co2: float = 420.0
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    odometry_noise: OdometryNoise = field(default_factory=OdometryNoise)


@dataclass(frozen=True)
class WorldState:
    """Ground-truth plant. ``odom_pose`` is the dead-reckoned pose built from noisy odometry."""
    time: float
    grid: OccupancyGrid
    plumes: Tuple[GasPlume, ...] = ()
    sources: Tuple[AcousticSource, ...] = ()
    patches: Tuple[OilPatch, ...] = ()
    agents: Tuple[DynamicAgent, ...] = ()
    robot_pose: Pose2D = field(default_factory=Pose2D)
    robot_twist: Twist = field(default_factory=Twist)
    odom_pose: Optional[Pose2D] = None
    rng_seed: int = 0
    tick: int = 0
    wind: Tuple[float, float] = (1.0, 0.0)
    base_wind: Tuple[float, float] = (1.0, 0.0)
    schedules: Tuple[ScheduleEvent, ...] = ()
    params: WorldParams = field(default_factory=WorldParams)

    def __post_init__(self):
        if self.odom_pose is None:
            object.__setattr__(self, 'odom_pose', self.robot_pose)
        for name in ('plumes', 'sources', 'patches', 'agents', 'schedules'):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def with_command(self, twist: Twist) -> 'WorldState':
        return replace(self, robot_twist=twist)

    def with_robot_pose(self, pose: Pose2D) -> 'WorldState':
        return replace(self, robot_pose=pose, odom_pose=pose)

    def concentration_species(self) -> Iterable[Species]:
        return sorted({p.species for p in self.plumes}, key=lambda s: s.value)

    def fingerprint(self) -> str:
        """SHA-256 over every field; equal fingerprints mean bit-identical states."""
        h = hashlib.sha256()
        h.update(np.float64(self.time).tobytes())
        h.update(np.int64(self.tick).tobytes())
        h.update(self.grid.logodds.tobytes())
        h.update(self.grid.ground_depth.tobytes())
        for pose in (self.robot_pose, self.odom_pose):
            h.update(np.array(pose.as_tuple()).tobytes())
        h.update(np.array([self.robot_twist.v, self.robot_twist.omega, *self.wind]).tobytes())
        for plume in self.plumes:
            h.update(repr(plume).encode('utf-8'))
        for agent in self.agents:
            h.update(np.array([*agent.position, *agent.velocity, agent.target]).tobytes())
        for item in (*self.sources, *self.patches):
            h.update(repr(item).encode('utf-8'))
        return h.hexdigest()

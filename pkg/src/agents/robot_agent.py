"""
Robot side of the inspection.

The world simulation runs inside the robot in lock-step with its control
loop: every control tick steps the world, reads the sensors at the true pose,
localizes against the reference map and drives the local planner from the
estimated pose. At checkpoints the robot stops and hands itself to the
checkpoint evaluator as the sensor access.
"""
import copy
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from config import Config, deep_merge, params_from
from msgbus import BusClient
from msgbus.payloads import (encode_detections, encode_frame_pair, encode_frame_triples, encode_gas_samples,
                             encode_grid, encode_json, encode_mic_frame, encode_scan, pose_meta)
from nav import (BevParams, LikelihoodField, LocalPlannerParams, MappingParams, MclParams, NoPath, ParticleSet,
                 StartInCollision, TrackState, inflate, mcl_update, plan_global, plan_local, pointcloud_to_scan,
                 project_bev, update_map)
from nav.channels import hazard_points
from sensors import (DetectorParams, EnoseParams, GasCameraParams, LidarParams, MicParams, PointCloudParams,
                     TiltedScannerParams, UVCameraParams, detect_objects_with, enose_sample, gas_camera_capture,
                     lidar_pointcloud, lidar_scan_with, mic_capture, tilted_scan, uv_capture)
from sensors.types import GasSample, Scan2D
from simworld import OutOfGridError, Pose2D, Twist, step_world
from simworld.scenario import Scenario
from simworld.types import KinematicLimits, OccupancyGrid, OdometryNoise, WorldParams
from utils.guards import wrap_angle
from utils.rate_limiter import RateGate
from utils.rng import derive_rng
from .checkpoint_evaluator import AnalyticsLink, CheckpointSensors, evaluate_checkpoint
from .mission_plan import Checkpoint, MissionPlan

logger = logging.getLogger(__name__)

REACHED = 'reached'
WATCHDOG = 'watchdog'


@dataclass(frozen=True)
class RobotParams:
    control_rate: float = 10.0
    goal_tolerance: float = 0.2
    heading_tolerance: float = 0.1
    heading_gain: float = 1.5
    inflation_radius: float = 0.45
    start_clearance: float = 0.4
    leg_timeout: float = 240.0
    watchdog: float = 600.0
    stuck_replan: float = 5.0
    use_pointcloud: bool = False
    init_sigma: Tuple[float, float, float] = (0.05, 0.05, 0.02)
    local_rate: float = 5.0
    map_rate: float = 2.0
    map_exclusion: float = 0.5
    snapshot_radius: float = 4.0
    tilted_noise: float = 0.0
    lidar_rate: float = 5.0
    detections_rate: float = 5.0
    pose_rate: float = 10.0
    cmd_rate: float = 10.0
    enose_rate: float = 1.0
    clock_rate: float = 1.0


@dataclass
class RobotSetup:
    """Every tunable the robot needs, built from the layered config."""
    robot: RobotParams = field(default_factory=RobotParams)
    lidar: LidarParams = field(default_factory=LidarParams)
    pointcloud: PointCloudParams = field(default_factory=PointCloudParams)
    tilted: TiltedScannerParams = field(default_factory=TiltedScannerParams)
    enose: EnoseParams = field(default_factory=EnoseParams)
    mic: MicParams = field(default_factory=MicParams)
    gascam: GasCameraParams = field(default_factory=GasCameraParams)
    uv: UVCameraParams = field(default_factory=UVCameraParams)
    detections: DetectorParams = field(default_factory=DetectorParams)
    mcl: MclParams = field(default_factory=MclParams)
    mapping: MappingParams = field(default_factory=MappingParams)
    bev: BevParams = field(default_factory=BevParams)
    local: LocalPlannerParams = field(default_factory=LocalPlannerParams)

    @classmethod
    def from_config(cls, cfg: Config, scenario_sensors: Optional[Mapping[str, Any]] = None) -> 'RobotSetup':
        sensors = deep_merge(copy.deepcopy(cfg.section('sensors')), scenario_sensors or {})
        return cls(
            robot=params_from(RobotParams, cfg.section('runner.robot')),
            lidar=params_from(LidarParams, sensors.get('lidar')),
            pointcloud=params_from(PointCloudParams, sensors.get('pointcloud')),
            tilted=params_from(TiltedScannerParams, sensors.get('tilted')),
            enose=params_from(EnoseParams, sensors.get('enose')),
            mic=params_from(MicParams, sensors.get('mic')),
            gascam=params_from(GasCameraParams, sensors.get('gascam')),
            uv=params_from(UVCameraParams, sensors.get('uv')),
            detections=params_from(DetectorParams, sensors.get('detections')),
            mcl=params_from(MclParams, cfg.section('nav.mcl')),
            mapping=params_from(MappingParams, cfg.section('nav.mapping')),
            bev=params_from(BevParams, cfg.section('nav.bev')),
            local=params_from(LocalPlannerParams, cfg.section('nav.local')),
        )


def world_params(cfg: Config) -> WorldParams:
    """World stepping parameters from the ``sim`` section (``limits`` and ``odometry_noise`` nested)."""
    section = cfg.section('sim')
    limits = params_from(KinematicLimits, section.pop('limits', None))
    noise = params_from(OdometryNoise, section.pop('odometry_noise', None))
    return params_from(WorldParams, section, limits=limits, odometry_noise=noise)


@dataclass
class RobotOutcome:
    records: List[Dict[str, Any]]
    results: Dict[Tuple[int, str], Dict[str, Any]]
    route: Dict[str, Any]


class RobotAgent(CheckpointSensors):
    """Drives the plan, localizing and mapping on the way, and runs the checkpoints."""

    def __init__(self, scenario: Scenario, plan: MissionPlan, link: AnalyticsLink,
                 setup: RobotSetup = RobotSetup(), client: Optional[BusClient] = None):
        """Initialize the robot agent.

        Args:
            scenario: loaded scenario; its world is the plant the robot drives in
            plan: inspection route
            link: how analysis requests are answered (bus or in-process)
            setup: sensor, navigation and loop parameters
            client: started bus client for telemetry; None runs without publishing
        """
        self.scenario = scenario
        self.plan = plan
        self.link = link
        self.setup = setup
        self.params = setup.robot
        self.client = client
        self.world = scenario.world
        self.reference = scenario.reference_grid
        self.dt = self.world.params.dt
        self.steps_per_tick = max(int(round(1.0 / (self.params.control_rate * self.dt))), 1)
        self.gate = RateGate({'local': self.params.local_rate, 'map': self.params.map_rate,
                              'lidar': self.params.lidar_rate, 'detections': self.params.detections_rate,
                              'pose': self.params.pose_rate, 'cmd': self.params.cmd_rate,
                              'enose': self.params.enose_rate, 'clock': self.params.clock_rate})

        start = self.world.robot_pose
        rng = derive_rng(scenario.seed, 'mcl_init')
        self.particles = ParticleSet.gaussian(start, self.params.init_sigma, setup.mcl.n_particles, rng)
        self.field = LikelihoodField(self.reference, setup.mcl.max_distance)
        self.estimate = start
        self.last_odom = self.world.odom_pose
        self.map = OccupancyGrid.empty(self.reference.width, self.reference.height, self.reference.resolution,
                                       self.reference.origin)
        self.tracks = TrackState()
        self.track_history: Dict[Tuple[float, float], float] = {}
        self.obstacles = []
        self.scan: Optional[Scan2D] = None
        self.cmd = Twist()
        self.trajectory = None
        self.hazards = set()
        self._blocked = None

        self.enose_last: Optional[GasSample] = None
        self.enose_window_samples: List[GasSample] = []
        self.mic_cache: Optional[Tuple[int, Any]] = None

        self.distance = 0.0
        self.safety_stops = 0
        self.localization_flags = 0
        self.records: List[Dict[str, Any]] = []
        self.results: Dict[Tuple[int, str], Dict[str, Any]] = {}
        self._sense()

    # -- bus -------------------------------------------------------------------

    def stamp_ns(self) -> int:
        return int(round(self.world.time * 1e9))

    def publish(self, topic: str, payload: bytes) -> None:
        if self.client is not None:
            self.client.publish(topic, payload, timestamp_ns=self.stamp_ns())

    def publish_status(self, message: Dict[str, Any]) -> None:
        self.publish('mission/status', encode_json({**message, 'time': self.world.time}))

    # -- control loop ----------------------------------------------------------

    @property
    def now(self) -> float:
        return self.world.time

    def _advance(self, twist: Twist) -> None:
        """One control tick: hold ``twist`` for the tick, then sense and localize."""
        self.cmd = twist
        self.world = self.world.with_command(twist)
        for _ in range(self.steps_per_tick):
            self.world = step_world(self.world, self.dt)
            if self.gate.due('enose', self.world.time):
                self._sample_enose()
        self._sense()

    def _sample_enose(self) -> None:
        dt = 1.0 / self.params.enose_rate
        if self.enose_last is not None:
            dt = max(self.world.time - self.enose_last.stamp, 1e-3)
        self.enose_last = enose_sample(self.world, self.world.robot_pose, self.enose_last, dt, self.setup.enose)
        self.enose_window_samples.append(self.enose_last)
        self.publish('sensors/enose', encode_gas_samples([self.enose_last]))

    def _lidar(self) -> Scan2D:
        pose = self.world.robot_pose
        if self.params.use_pointcloud:
            pc = self.setup.pointcloud
            cloud = lidar_pointcloud(self.world, pose, pc)
            return pointcloud_to_scan(cloud, n_bins=self.setup.lidar.n_beams, max_range=pc.max_range,
                                      stamp=self.world.time)
        return lidar_scan_with(self.world, pose, self.setup.lidar)

    def _sense(self) -> None:
        world = self.world
        scan = self._lidar()
        odom = world.odom_pose
        delta = self.last_odom.between(odom)
        self.last_odom = odom
        self.distance += math.hypot(delta.x, delta.y)

        res = mcl_update(self.particles, delta, scan, self.reference, self.setup.mcl,
                         derive_rng(self.scenario.seed, 'mcl', world.tick), self.field, self.estimate)
        self.particles = res.particles
        if res.flagged:
            self.localization_flags += 1
            logger.warning(f't={world.time:.1f}s localization flagged '
                           f'({"diverged" if res.diverged else "relocalized"})')
        self.estimate = res.estimate
        self.scan = scan

        dets = detect_objects_with(world, world.robot_pose, self.setup.detections)
        self.obstacles, self.tracks = project_bev(replace(dets, pose=self.estimate), scan, self.estimate,
                                                  self.tracks, self.setup.bev)
        for tr in self.tracks.tracks:
            self.track_history[(round(tr.center[0], 1), round(tr.center[1], 1))] = tr.radius

        if self.gate.due('map', world.time):
            self._update_map(scan)

        t = world.time
        if self.gate.due('pose', t):
            self.publish('nav/pose', encode_json({'pose': pose_meta(self.estimate), 'time': t,
                                                  'flagged': bool(res.flagged)}))
        if self.gate.due('cmd', t):
            self.publish('nav/cmd', encode_json({'v': self.cmd.v, 'omega': self.cmd.omega, 'time': t}))
        if self.gate.due('lidar', t):
            self.publish('sensors/lidar', encode_scan(scan, pose=pose_meta(self.estimate)))
        if self.gate.due('detections', t):
            self.publish('sensors/detections', encode_detections(dets))
        if self.gate.due('clock', t):
            self.publish('sim/clock', encode_json({'time': t, 'tick': world.tick}))
        logger.debug(f't={t:.1f}s est=({self.estimate.x:.2f}, {self.estimate.y:.2f}) '
                     f'cmd=({self.cmd.v:.2f}, {self.cmd.omega:.2f}) tracks={len(self.tracks.tracks)}')

    def _update_map(self, scan: Scan2D) -> None:
        """Fold the scan into the robot's map, leaving out beams that end on tracked agents."""
        keep = np.ones(len(scan), dtype=bool)
        if self.tracks.tracks:
            ends = self.estimate.to_world(np.column_stack((scan.ranges * np.cos(scan.angles),
                                                          scan.ranges * np.sin(scan.angles))))
            for tr in self.tracks.tracks:
                keep &= np.hypot(ends[:, 0] - tr.center[0], ends[:, 1] - tr.center[1]) > \
                    tr.radius + self.params.map_exclusion
        try:
            self.map = update_map(self.map, self.estimate,
                                  Scan2D(scan.angles[keep], scan.ranges[keep], scan.stamp, scan.max_range),
                                  self.setup.mapping)
        except OutOfGridError as e:
            logger.warning(f'map update skipped: {e}')

    # -- navigation ------------------------------------------------------------

    def _blocked_mask(self) -> np.ndarray:
        if self._blocked is None:
            self._blocked = inflate(self.reference, self.params.inflation_radius, self.hazards)
        return self._blocked

    def _plan(self, goal: Pose2D, extra_points: Optional[np.ndarray] = None):
        blocked = self._blocked_mask().copy()
        if extra_points is not None and len(extra_points):
            extra = np.zeros_like(blocked)
            rows, cols = self.reference.cells_of(extra_points)
            ok = (rows >= 0) & (rows < blocked.shape[0]) & (cols >= 0) & (cols < blocked.shape[1])
            extra[rows[ok], cols[ok]] = True
            blocked |= inflate(self.reference.with_logodds(np.where(extra, 5.0, -5.0)),
                               self.params.inflation_radius)
        # the robot's own surroundings stay open so it can leave a tight spot
        xs, ys = self.reference.cell_centers()
        near = np.hypot(xs - self.estimate.x, ys - self.estimate.y) <= self.params.start_clearance
        blocked[near & ~self.reference.occupied_mask()] = False
        path = plan_global(self.reference, self.estimate, goal, blocked=blocked)
        self.publish('nav/path', encode_json({'goal': pose_meta(goal), 'points': path.points().round(3).tolist()}))
        return path

    def _static_points(self) -> np.ndarray:
        pts = self.estimate.to_world(self.scan.endpoints()) if self.scan is not None else np.zeros((0, 2))
        if self.hazards:
            pts = np.vstack((pts, hazard_points(self.reference, sorted(self.hazards))))
        return pts

    def _watchdog_expired(self) -> bool:
        return self.world.time >= self.params.watchdog

    def drive_to(self, index: int, goal: Pose2D) -> str:
        """Drive to waypoint ``index``; returns ``REACHED``, ``WATCHDOG`` or the reason it was given up."""
        p = self.params
        try:
            path = self._plan(goal)
        except (NoPath, StartInCollision, OutOfGridError) as e:
            logger.warning(f'No path to waypoint {index} ({goal.x:.2f}, {goal.y:.2f}): {e}')
            return f'no path to waypoint {index}'
        logger.info(f'Leg to waypoint {index} ({goal.x:.2f}, {goal.y:.2f}): {len(path)} cells')
        t0 = self.world.time
        stopped_since = None
        self.trajectory = None
        while self.estimate.distance_to(goal) > p.goal_tolerance:
            if self._watchdog_expired():
                return WATCHDOG
            if self.world.time - t0 > p.leg_timeout:
                logger.warning(f'Waypoint {index} not reached within {p.leg_timeout:.0f} s')
                return f'waypoint {index} not reached (leg timeout)'
            if self.trajectory is None or self.gate.due('local', self.world.time):
                was_stopped = self.trajectory is not None and self.trajectory.stopped
                self.trajectory = plan_local(path, self.estimate, self.cmd, self.obstacles, self.setup.local,
                                             self._static_points(), self.world.time)
                if self.trajectory.stopped:
                    if not was_stopped:
                        self.safety_stops += 1
                    stopped_since = self.world.time if stopped_since is None else stopped_since
                else:
                    stopped_since = None
            twist = self.trajectory.twist
            if stopped_since is not None and self.world.time - stopped_since > p.stuck_replan:
                try:
                    path = self._plan(goal, self._static_points())
                    logger.info(f'Replanned around unmapped obstacles toward waypoint {index}')
                except (NoPath, StartInCollision, OutOfGridError) as e:
                    logger.warning(f'Replan toward waypoint {index} failed: {e}')
                stopped_since = None
                self.trajectory = None
            self._advance(twist)

        while abs(wrap_angle(goal.theta - self.estimate.theta)) > p.heading_tolerance:
            if self._watchdog_expired():
                return WATCHDOG
            err = wrap_angle(goal.theta - self.estimate.theta)
            omega = max(min(p.heading_gain * err, self.setup.local.omega_max), -self.setup.local.omega_max)
            self._advance(Twist(0.0, omega))
        self._advance(Twist(0.0, 0.0))
        return REACHED

    # -- checkpoint sensor access ----------------------------------------------

    def wait(self, seconds: float) -> None:
        ticks = math.ceil(seconds * self.params.control_rate - 1e-9)
        for _ in range(max(ticks, 0)):
            self._advance(Twist(0.0, 0.0))

    def begin_window(self) -> None:
        self.enose_window_samples = []
        self.mic_cache = None

    def mic_frame(self, tag: Mapping) -> bytes:
        # doa and sound_anomaly share one capture at a checkpoint
        if self.mic_cache is None or self.mic_cache[0] != tag['checkpoint']:
            frame = mic_capture(self.world, self.world.robot_pose, self.setup.mic.frame_duration,
                                self.setup.mic.snr_db, self.setup.mic)
            self.mic_cache = (tag['checkpoint'], frame)
        return encode_mic_frame(self.mic_cache[1], **tag, pose=pose_meta(self.estimate))

    def uv_pair(self, tag: Mapping) -> bytes:
        pair = uv_capture(self.world, self.world.robot_pose, self.setup.uv.range_limit, self.setup.uv)
        return encode_frame_pair(replace(pair, pose=self.estimate), **tag)

    def tilted_scan(self, tag: Mapping) -> bytes:
        scan = tilted_scan(self.world, self.world.robot_pose, self.setup.tilted, self.params.tilted_noise)
        return encode_scan(scan, **tag, pose=pose_meta(self.estimate))

    def map_snapshot(self, tag: Mapping) -> bytes:
        """The robot's map within ``snapshot_radius`` of it; cells further out read unknown."""
        xs, ys = self.map.cell_centers()
        far = np.hypot(xs - self.estimate.x, ys - self.estimate.y) > self.params.snapshot_radius
        local = self.map.with_logodds(np.where(far, 0.0, self.map.logodds))
        agents = [[x, y, r] for (x, y), r in sorted(self.track_history.items())]
        return encode_grid(local, **tag, pose=pose_meta(self.estimate), agents=agents)

    def gascam_sequence(self, frames: int, period: float, tag: Mapping) -> bytes:
        triples = []
        for i in range(frames):
            if i:
                self.wait(period)
            triple = gas_camera_capture(self.world, self.world.robot_pose, self.setup.gascam)
            triples.append(replace(triple, pose=self.estimate))
        wind = list(self.enose_last.wind) if self.enose_last is not None else None
        return encode_frame_triples(triples, **tag, wind=wind)

    def enose_window(self, samples: int, tag: Mapping) -> bytes:
        return encode_gas_samples(self.enose_window_samples[-samples:], **tag)

    # -- mission ---------------------------------------------------------------

    def _skipped_record(self, index: int, cp: Checkpoint, reason: str) -> Dict[str, Any]:
        return {'checkpoint': index, 'waypoint': cp.waypoint, 'label': cp.label, 'pose': None, 't_start': None,
                't_end': None, 'skipped': reason,
                'checks': {c: {'attempts': 0, 'answered': False, 'reason': reason} for c in cp.checks}}

    def run_checkpoint(self, index: int, cp: Checkpoint) -> Dict[str, Any]:
        logger.info(f'Checkpoint {index} ({cp.label or "unlabelled"}): {", ".join(cp.checks)}, dwell {cp.dwell} s')
        results, t_start, t_end = evaluate_checkpoint(index, cp.checks, self, self.link, cp.dwell)
        checks = {}
        for check in cp.checks:
            res = results[check]
            checks[check] = {'attempts': res.attempts, 'answered': res.result is not None, 'reason': res.reason}
            if res.result is None:
                continue
            self.results[(index, check)] = res.result
            if check == 'channel' and res.result.get('ok'):
                cells = {tuple(c) for c in res.result.get('details', {}).get('cells', [])}
                if cells - self.hazards:
                    self.hazards |= cells
                    self._blocked = None
                    logger.info(f'{len(cells)} channel cells added to the planner hazards')
        return {'checkpoint': index, 'waypoint': cp.waypoint, 'label': cp.label, 'pose': pose_meta(self.estimate),
                't_start': t_start, 't_end': t_end, 'skipped': '', 'checks': checks}

    def route_stats(self, complete: bool, reason: str, reached: int) -> Dict[str, Any]:
        return {'complete': complete, 'reason': reason, 'waypoints_reached': reached,
                'distance_m': round(self.distance, 6), 'sim_time': round(self.world.time, 6),
                'safety_stops': self.safety_stops, 'localization_flags': self.localization_flags}

    def run(self) -> RobotOutcome:
        """Execute the plan and publish the checkpoint records and route statistics."""
        sc = self.scenario
        self.publish_status({'type': 'plan', 'plan': self.plan.to_dict(), 'scenario': sc.name,
                             'variant': sc.variant, 'seed': sc.seed, 'digest': sc.digest})
        logger.info(f'Robot starting plan {self.plan.name}: {len(self.plan.waypoints)} waypoints')
        reached, reason = 0, ''
        for wi, goal in enumerate(self.plan.waypoints):
            status = self.drive_to(wi, goal)
            if status == WATCHDOG:
                reason = f'watchdog expired after {self.params.watchdog:.0f} s sim time'
                logger.warning(f'Mission incomplete: {reason}')
                break
            if status != REACHED:
                for ci, cp in self.plan.checkpoints_at(wi):
                    record = self._skipped_record(ci, cp, status)
                    self.records.append(record)
                    self.publish_status({'type': 'checkpoint', 'record': record})
                continue
            reached += 1
            self.publish_status({'type': 'waypoint', 'waypoint': wi, 'pose': pose_meta(self.estimate)})
            for ci, cp in self.plan.checkpoints_at(wi):
                record = self.run_checkpoint(ci, cp)
                self.records.append(record)
                self.publish_status({'type': 'checkpoint', 'record': record})
        route = self.route_stats(not reason, reason, reached)
        self.publish('mission/report', encode_json({'type': 'report', 'records': self.records, 'route': route}))
        logger.info(f'Robot finished: {reached}/{len(self.plan.waypoints)} waypoints, '
                    f'{route["distance_m"]:.1f} m in {route["sim_time"]:.1f} s sim time')
        return RobotOutcome(self.records, self.results, route)

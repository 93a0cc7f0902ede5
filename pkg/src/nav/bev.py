"""
Bird's-eye-view projection of camera detections using the planar scan, with
nearest-neighbour constant-velocity tracking.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from simworld.types import Pose2D
from sensors.types import DetectionSet, Scan2D
from utils.guards import wrap_angles

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BevParams:
    window_deg: float = 2.0
    gate: float = 1.0
    beta: float = 0.5
    expiry: float = 1.0


@dataclass(frozen=True)
class BevObstacle:
    """Map-frame disc obstacle with a constant-velocity prediction."""
    center: Tuple[float, float]
    radius: float
    velocity: Tuple[float, float] = (0.0, 0.0)
    cls: str = 'pedestrian'
    stamp: float = 0.0
    track_id: int = -1

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f'obstacle radius must be > 0, got {self.radius}')

    def predict(self, t: float) -> Tuple[float, float]:
        """Centre at absolute time ``t``."""
        dt = t - self.stamp
        return self.center[0] + self.velocity[0] * dt, self.center[1] + self.velocity[1] * dt

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass(frozen=True)
class TrackState:
    tracks: Tuple[BevObstacle, ...] = ()
    next_id: int = 0
    last_seen: Tuple[float, ...] = ()


def scan_range_at(scan: Scan2D, bearing: float, window: float) -> Optional[float]:
    """Median scan range within +-window of a robot-frame bearing; None outside the scan's coverage."""
    if scan.angles.size == 0:
        return None
    offsets = np.abs(wrap_angles(scan.angles - bearing))
    inc = abs(scan.angle_increment) or window
    covered = (scan.angles.max() - scan.angles.min()) + inc >= 2.0 * math.pi - 1e-9
    if not covered and offsets.min() > inc / 2.0:
        return None
    sel = offsets <= window
    if not sel.any():
        sel = offsets == offsets.min()
    return float(np.median(scan.ranges[sel]))


def project_bev(dets: DetectionSet, scan: Scan2D, robot_pose: Pose2D, track_state: TrackState = TrackState(),
                params: BevParams = BevParams()) -> Tuple[List[BevObstacle], TrackState]:
    """Place detections in the map frame and update the track list.

    Each detection's range comes from the scan (median over the bearing
    window) plus the detected footprint radius; detections whose window reads
    max range are treated as clutter. Returns the live obstacles and the new
    track state.
    """
    stamp = dets.stamp
    window = math.radians(params.window_deg)
    measured = []
    for det in dets.detections:
        rng = scan_range_at(scan, det.bearing, window)
        if rng is None:
            logger.debug(f'detection at bearing {math.degrees(det.bearing):.1f} deg outside scan coverage')
            continue
        if rng >= scan.max_range:
            continue
        centre_range = rng + det.footprint_radius
        a = robot_pose.theta + det.bearing
        measured.append(((robot_pose.x + centre_range * math.cos(a), robot_pose.y + centre_range * math.sin(a)),
                         det))

    tracks = list(track_state.tracks)
    last_seen = list(track_state.last_seen) or [t.stamp for t in tracks]
    pairs = []
    for ti, tr in enumerate(tracks):
        px, py = tr.predict(stamp)
        for mi, ((mx, my), _) in enumerate(measured):
            d = math.hypot(mx - px, my - py)
            if d <= params.gate:
                pairs.append((d, ti, mi))
    pairs.sort()
    used_t, used_m = set(), set()
    updated = {}
    for _, ti, mi in pairs:
        if ti in used_t or mi in used_m:
            continue
        used_t.add(ti)
        used_m.add(mi)
        tr = tracks[ti]
        (mx, my), det = measured[mi]
        dt = stamp - tr.stamp
        if dt > 0:
            vx_new, vy_new = (mx - tr.center[0]) / dt, (my - tr.center[1]) / dt
            vel = (params.beta * vx_new + (1.0 - params.beta) * tr.velocity[0],
                   params.beta * vy_new + (1.0 - params.beta) * tr.velocity[1])
        else:
            vel = tr.velocity
        updated[ti] = replace(tr, center=(mx, my), velocity=vel, radius=det.footprint_radius, cls=det.cls,
                              stamp=stamp)

    next_id = track_state.next_id
    out_tracks, out_seen = [], []
    for ti, tr in enumerate(tracks):
        if ti in updated:
            out_tracks.append(updated[ti])
            out_seen.append(stamp)
        elif stamp - last_seen[ti] <= params.expiry:
            out_tracks.append(tr)
            out_seen.append(last_seen[ti])
        else:
            logger.debug(f'track {tr.track_id} expired')
    for mi, ((mx, my), det) in enumerate(measured):
        if mi in used_m:
            continue
        out_tracks.append(BevObstacle((mx, my), det.footprint_radius, (0.0, 0.0), det.cls, stamp, next_id))
        out_seen.append(stamp)
        next_id += 1
    return list(out_tracks), TrackState(tuple(out_tracks), next_id, tuple(out_seen))

"""
Simulated object detector standing in for the camera network: visible agents
with bearing/range noise, random misses and Poisson clutter.
"""
import math
from dataclasses import dataclass

import numpy as np

from simworld.geometry import raycast
from simworld.types import AgentClass, Pose2D, WorldState
from utils.guards import check_probability, wrap_angle
from utils.rng import derive_rng
from .types import Detection, DetectionSet

CLASSES = tuple(c.value for c in AgentClass)


@dataclass(frozen=True)
class DetectorParams:
    fov: float = math.radians(120.0)
    max_range: float = 15.0
    miss_rate: float = 0.05
    clutter_rate: float = 0.1
    bearing_sigma: float = math.radians(1.0)
    range_sigma: float = 0.1


def detect_objects_sim(world: WorldState, pose: Pose2D, fov: float = math.radians(120.0),
                       max_range: float = 15.0, miss_rate: float = 0.05, clutter_rate: float = 0.1,
                       bearing_sigma: float = math.radians(1.0), range_sigma: float = 0.1) -> DetectionSet:
    """Detections of agents in the field of view that the static map does not occlude.

    Confidence ~ Beta(8, 2) for true agents and Beta(2, 5) for clutter; ranges
    are to the agent centre.
    """
    check_probability(miss_rate, 'miss_rate')
    check_probability(clutter_rate, 'clutter_rate')
    rng = derive_rng(world.rng_seed, 'detections', world.tick)
    occupied = world.grid.occupied_mask()
    out = []
    for agent in world.agents:
        dx, dy = agent.position[0] - pose.x, agent.position[1] - pose.y
        rng_true = math.hypot(dx, dy)
        bearing = wrap_angle(math.atan2(dy, dx) - pose.theta)
        if abs(bearing) > fov / 2.0 or rng_true > max_range or rng_true <= agent.footprint_radius:
            continue
        wall = raycast(world.grid, pose, pose.theta + bearing, max_range, occupied)
        if wall < rng_true - agent.footprint_radius:
            continue
        # draws happen for every visible agent so the stream does not depend on misses
        missed = rng.random() < miss_rate
        b = wrap_angle(bearing + rng.normal(0.0, bearing_sigma))
        r = max(rng_true + rng.normal(0.0, range_sigma), 0.05)
        conf = float(rng.beta(8.0, 2.0))
        if not missed:
            out.append(Detection(agent.agent_class.value, b, r, agent.footprint_radius, conf))
    for _ in range(int(rng.poisson(clutter_rate))):
        out.append(Detection(CLASSES[int(rng.integers(len(CLASSES)))],
                             float(rng.uniform(-fov / 2.0, fov / 2.0)),
                             float(rng.uniform(0.5, max_range)), 0.3, float(rng.beta(2.0, 5.0))))
    return DetectionSet(world.time, tuple(out), pose)


def detect_objects_with(world: WorldState, pose: Pose2D, params: DetectorParams) -> DetectionSet:
    return detect_objects_sim(world, pose, params.fov, params.max_range, params.miss_rate,
                              params.clutter_rate, params.bearing_sigma, params.range_sigma)

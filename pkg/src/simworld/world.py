"""
Fixed-step world advance and differential-drive kinematics.
"""
import logging
import math
from dataclasses import replace
from typing import Optional, Tuple

import numpy as np

from utils.guards import check_finite, check_positive, check_range, wrap_angle
from utils.rng import derive_rng
from .types import DynamicAgent, GasPlume, OdometryNoise, Pose2D, Twist, WorldState

logger = logging.getLogger(__name__)

MAX_DT = 0.5


def integrate_unicycle(pose: Pose2D, cmd: Twist, dt: float) -> Pose2D:
    """Exact arc integration of a constant (v, omega) command."""
    v, w = cmd.v, cmd.omega
    th = pose.theta
    if abs(w) < 1e-12:
        return Pose2D(pose.x + v * math.cos(th) * dt, pose.y + v * math.sin(th) * dt, th + w * dt)
    th1 = th + w * dt
    r = v / w
    return Pose2D(pose.x + r * (math.sin(th1) - math.sin(th)),
                  pose.y - r * (math.cos(th1) - math.cos(th)),
                  th1)


def odometry_components(delta: Pose2D) -> Tuple[float, float, float]:
    """Split a robot-frame delta into (rot1, trans, rot2); trans is negative when reversing."""
    trans = math.hypot(delta.x, delta.y)
    if trans < 1e-9:
        return 0.0, 0.0, delta.theta
    rot1 = math.atan2(delta.y, delta.x)
    if abs(rot1) > math.pi / 2:
        rot1 = wrap_angle(rot1 + math.pi)
        trans = -trans
    return rot1, trans, wrap_angle(delta.theta - rot1)


def perturb_odometry(delta: Pose2D, noise: OdometryNoise, rng: Optional[np.random.Generator]) -> Pose2D:
    if noise.is_zero or rng is None:
        return delta
    rot1, trans, rot2 = odometry_components(delta)
    a1, a2, a3, a4 = noise.alpha1, noise.alpha2, noise.alpha3, noise.alpha4
    rot1_n = rot1 - rng.normal(0.0, math.sqrt(a1 * rot1 ** 2 + a2 * trans ** 2))
    trans_n = trans - rng.normal(0.0, math.sqrt(a3 * trans ** 2 + a4 * (rot1 ** 2 + rot2 ** 2)))
    rot2_n = rot2 - rng.normal(0.0, math.sqrt(a1 * rot2 ** 2 + a2 * trans ** 2))
    return Pose2D(trans_n * math.cos(rot1_n), trans_n * math.sin(rot1_n), rot1_n + rot2_n)


def apply_drive(pose: Pose2D, cmd: Twist, dt: float, noise: OdometryNoise = OdometryNoise(),
                rng: Optional[np.random.Generator] = None) -> Tuple[Pose2D, Pose2D]:
    """Move the robot for dt seconds.

    Args:
        pose: current true pose
        cmd: commanded twist, held constant over dt
        dt: step length in seconds (> 0)
        noise: odometry noise parameters (alpha1..alpha4)
        rng: generator for the odometry corruption; required when noise is non-zero

    Returns:
        (true_pose, odom_delta) where odom_delta is the robot-frame delta as reported by odometry
    """
    check_positive(dt, 'dt')
    true_pose = integrate_unicycle(pose, cmd, dt)
    delta = pose.between(true_pose)
    return true_pose, perturb_odometry(delta, noise, rng)


def advance_agent(agent: DynamicAgent, dt: float) -> DynamicAgent:
    """Move along the cyclic waypoint loop, carrying leftover distance past each waypoint."""
    x, y = agent.position
    target = agent.target
    remaining = agent.speed * dt
    vx = vy = 0.0
    if remaining <= 0.0 or len(agent.waypoints) < 2:
        return replace(agent, velocity=(0.0, 0.0))
    for _ in range(4 * len(agent.waypoints) + 1):
        tx, ty = agent.waypoints[target]
        dist = math.hypot(tx - x, ty - y)
        if dist > 0.0:
            vx, vy = agent.speed * (tx - x) / dist, agent.speed * (ty - y) / dist
        if dist > remaining:
            x += (tx - x) * remaining / dist
            y += (ty - y) * remaining / dist
            break
        x, y = tx, ty
        remaining -= dist
        target = (target + 1) % len(agent.waypoints)
        if remaining <= 0.0:
            break
    return replace(agent, position=(x, y), target=target, velocity=(vx, vy))


def wind_at(world: WorldState, t: float) -> Tuple[float, float]:
    p = world.params
    speed, direction = world.base_wind
    if p.wind_meander_period > 0:
        direction += p.wind_meander_amplitude * math.sin(2.0 * math.pi * t / p.wind_meander_period)
    if p.gust_period > 0:
        speed *= 1.0 + p.gust_amplitude * math.sin(2.0 * math.pi * t / p.gust_period + 1.3)
    return max(speed, 0.0), wrap_angle(direction)


def _apply_schedules(world: WorldState, t_old: float, t_new: float) -> WorldState:
    due = [e for e in world.schedules if t_old < e.at <= t_new]
    if not due:
        return world
    base_wind = world.base_wind
    plumes = list(world.plumes)
    for event in sorted(due, key=lambda e: e.at):
        values = event.as_dict()
        if event.target == 'wind':
            base_wind = (values.get('speed', base_wind[0]), values.get('direction', base_wind[1]))
            logger.info(f'Wind schedule at t={event.at:.2f}s: {base_wind[0]:.2f} m/s, {base_wind[1]:.2f} rad')
        else:
            for i, plume in enumerate(plumes):
                if plume.id == event.target:
                    plumes[i] = replace(plume, emission_rate=values.get('emission_rate', plume.emission_rate))
                    logger.info(f'Plume {plume.id} rate -> {plumes[i].emission_rate:.1f} mL/min at t={event.at:.2f}s')
    return replace(world, base_wind=base_wind, plumes=tuple(plumes))


def step_world(world: WorldState, dt: float) -> WorldState:
    """Advance the world by dt seconds (0 < dt <= 0.5).

    Agents follow their waypoint loops, the robot integrates its current twist
    (clipped to the kinematic limits), plumes take the scheduled and
    meandering wind. Odometry noise is drawn from a generator keyed by
    (seed, tick), so equal seeds give bit-identical trajectories.
    """
    if not isinstance(dt, (int, float)) or not math.isfinite(dt):
        raise ValueError(f'dt must be finite, got {dt!r}')
    check_range(dt, 0.0, MAX_DT, 'dt', low_open=True)

    t_new = world.time + dt
    world = _apply_schedules(world, world.time, t_new)
    wind = wind_at(world, t_new)
    plumes = tuple(GasPlume(p.source, p.emission_rate, wind, p.species, p.height, p.id) for p in world.plumes)
    agents = tuple(advance_agent(a, dt) for a in world.agents)

    limits = world.params.limits
    cmd = world.robot_twist.clipped(limits.v_max, limits.omega_max)
    noise = world.params.odometry_noise
    rng = None if noise.is_zero else derive_rng(world.rng_seed, 'odometry', world.tick)
    robot_pose, odom_delta = apply_drive(world.robot_pose, cmd, dt, noise, rng)

    return replace(world, time=t_new, tick=world.tick + 1, wind=wind, plumes=plumes, agents=agents,
                   robot_pose=robot_pose, robot_twist=cmd, odom_pose=world.odom_pose.compose(odom_delta))


def run_world(world: WorldState, steps: int, dt: Optional[float] = None) -> WorldState:
    dt = world.params.dt if dt is None else dt
    for _ in range(int(steps)):
        world = step_world(world, dt)
    return world

"""
Timed elastic band with predicted dynamic obstacles.

Node positions p_1..p_N at times i * dt (p_0 is the robot) are optimized by
gradient descent against

    J = w_path  sum ||p_i - ref_i||^2
      + w_obs   sum_i sum_o max(0, r_safe - clearance(p_i, o(t_i)))^2
      + w_kin   sum (speed and acceleration limit violations)^2
      + w_smooth sum ||p_{i+1} - 2 p_i + p_{i-1}||^2
      + w_goal  ||p_N - ref_N||^2

where o(t) is an obstacle's constant-velocity prediction and clearance is
measured from the robot footprint to the obstacle disc.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from simworld.types import Pose2D, Twist
from utils.guards import wrap_angle
from .bev import BevObstacle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalPlannerParams:
    n_nodes: int = 15
    horizon: float = 3.0
    v_ref: float = 0.5
    robot_radius: float = 0.35
    r_safe: float = 0.5
    r_stop: float = 0.1
    w_path: float = 1.0
    w_obs: float = 100.0
    w_kin: float = 10.0
    w_smooth: float = 5.0
    w_goal: float = 2.0
    v_max: float = 1.0
    omega_max: float = 1.5
    a_max: float = 1.0
    iterations: int = 50
    step: float = 0.01
    step_max: float = 0.5
    max_halvings: int = 20
    speed_profiles: Tuple[float, ...] = (1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0)
    static_range: float = 3.0
    max_static_points: int = 120

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError(f'n_nodes must be >= 2, got {self.n_nodes}')
        if not self.horizon > 0:
            raise ValueError(f'horizon must be > 0, got {self.horizon}')

    @property
    def dt(self) -> float:
        return self.horizon / self.n_nodes


@dataclass
class LocalTrajectory:
    poses: List[Pose2D]
    times: np.ndarray
    twist: Twist
    cost: float
    cost_history: List[float] = field(default_factory=list)
    min_clearance: float = math.inf
    stopped: bool = False
    diverged: bool = False
    diagnostic: str = ''
    profile: float = 1.0

    def points(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.poses])


@dataclass(eq=False)
class BandProblem:
    """Everything the cost needs besides the free node positions."""
    p0: np.ndarray
    p_prev: np.ndarray
    reference: np.ndarray
    obstacles: np.ndarray
    radii: np.ndarray
    params: LocalPlannerParams
    obstacles_now: Optional[np.ndarray] = None


def _safe_norm(v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = np.linalg.norm(v, axis=-1)
    unit = np.divide(v, n[..., None], out=np.zeros_like(v), where=n[..., None] > 1e-12)
    return n, unit


def band_cost(nodes: np.ndarray, prob: BandProblem) -> Tuple[float, np.ndarray]:
    """Cost J and its analytic gradient with respect to the (N, 2) free nodes."""
    p = prob.params
    dt = p.dt
    grad = np.zeros_like(nodes)

    err = nodes - prob.reference
    cost = p.w_path * float(np.sum(err ** 2))
    grad += 2.0 * p.w_path * err
    cost += p.w_goal * float(np.sum(err[-1] ** 2))
    grad[-1] += 2.0 * p.w_goal * err[-1]

    if prob.radii.size:
        diff = nodes[:, None, :] - prob.obstacles
        dist, unit = _safe_norm(diff)
        clearance = dist - p.robot_radius - prob.radii[None, :]
        viol = np.maximum(0.0, p.r_safe - clearance)
        cost += p.w_obs * float(np.sum(viol ** 2))
        grad -= 2.0 * p.w_obs * np.sum(viol[..., None] * unit, axis=1)

    full = np.vstack((prob.p_prev, prob.p0, nodes))
    seg = full[2:] - full[1:-1]
    seg_len, seg_unit = _safe_norm(seg)
    v_viol = np.maximum(0.0, seg_len / dt - p.v_max)
    cost += p.w_kin * float(np.sum(v_viol ** 2))
    g_seg = 2.0 * p.w_kin * (v_viol / dt)[:, None] * seg_unit
    grad += g_seg
    grad[:-1] -= g_seg[1:]

    second = full[2:] - 2.0 * full[1:-1] + full[:-2]
    acc_len, acc_unit = _safe_norm(second / dt ** 2)
    a_viol = np.maximum(0.0, acc_len - p.a_max)
    cost += p.w_kin * float(np.sum(a_viol ** 2))
    cost += p.w_smooth * float(np.sum(second ** 2))
    g_sec = 2.0 * p.w_kin * (a_viol / dt ** 2)[:, None] * acc_unit + 2.0 * p.w_smooth * second
    # second[k] involves full[k+2] (+1), full[k+1] (-2), full[k] (+1); nodes are full[2:]
    grad += g_sec
    grad[:-1] -= 2.0 * g_sec[1:]
    grad[:-2] += g_sec[2:]
    return cost, grad


def _path_points(global_path) -> np.ndarray:
    if hasattr(global_path, 'points'):
        pts = global_path.points()
    else:
        pts = np.array([[q.x, q.y] if isinstance(q, Pose2D) else q for q in global_path], dtype=float)
    return np.asarray(pts, dtype=float).reshape(-1, 2)


def reference_points(path: np.ndarray, position: np.ndarray, distances: np.ndarray) -> np.ndarray:
    """Points at the given arc-length offsets past the projection of ``position`` onto the polyline."""
    if len(path) == 1:
        return np.repeat(path, distances.size, axis=0)
    seg = path[1:] - path[:-1]
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg_len)))
    rel = position - path[:-1]
    with np.errstate(invalid='ignore', divide='ignore'):
        u = np.clip(np.where(seg_len > 0, np.sum(rel * seg, axis=1) / seg_len ** 2, 0.0), 0.0, 1.0)
    proj = path[:-1] + u[:, None] * seg
    k = int(np.argmin(np.linalg.norm(proj - position, axis=1)))
    s = np.clip(cum[k] + u[k] * seg_len[k] + distances, 0.0, cum[-1])
    xs = np.interp(s, cum, path[:, 0])
    ys = np.interp(s, cum, path[:, 1])
    return np.column_stack((xs, ys))


def _obstacle_arrays(obstacles: Sequence[BevObstacle], static_points: Optional[np.ndarray], position: np.ndarray,
                     times: np.ndarray, now: float, params: LocalPlannerParams):
    centres, radii = [], []
    for ob in obstacles:
        track = np.array([ob.predict(now + t) for t in times])
        centres.append(track)
        radii.append(ob.radius)
    if static_points is not None and len(static_points):
        pts = np.asarray(static_points, dtype=float).reshape(-1, 2)
        d = np.linalg.norm(pts - position, axis=1)
        near = np.argsort(d)
        near = near[d[near] <= params.static_range][:params.max_static_points]
        for q in pts[near]:
            centres.append(np.repeat(q[None, :], times.size, axis=0))
            radii.append(0.0)
    if not centres:
        return np.zeros((times.size, 0, 2)), np.zeros(0)
    return np.stack(centres, axis=1), np.array(radii)


def min_clearance(points: np.ndarray, obstacles: np.ndarray, radii: np.ndarray, robot_radius: float) -> float:
    if radii.size == 0:
        return math.inf
    dist = np.linalg.norm(points[:, None, :] - obstacles, axis=-1)
    return float(np.min(dist - robot_radius - radii[None, :]))


def optimize_band(nodes: np.ndarray, prob: BandProblem) -> Tuple[np.ndarray, float, List[float], bool]:
    """Gradient descent with backtracking; returns (nodes, cost, accepted-cost history, diverged)."""
    p = prob.params
    cost, grad = band_cost(nodes, prob)
    if not (math.isfinite(cost) and np.all(np.isfinite(grad))):
        return nodes, cost, [cost], True
    history = [cost]
    step = p.step
    for _ in range(p.iterations):
        accepted = False
        for _ in range(p.max_halvings):
            trial = nodes - step * grad
            t_cost, t_grad = band_cost(trial, prob)
            if math.isfinite(t_cost) and t_cost <= cost and np.all(np.isfinite(t_grad)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        nodes, cost, grad = trial, t_cost, t_grad
        history.append(cost)
        step = min(step * 2.0, p.step_max)
    return nodes, cost, history, False


def _first_twist(pose: Pose2D, target: np.ndarray, dt: float, params: LocalPlannerParams) -> Twist:
    dx, dy = target[0] - pose.x, target[1] - pose.y
    dist = math.hypot(dx, dy)
    if dist < 1e-6:
        return Twist(0.0, 0.0)
    alpha = wrap_angle(math.atan2(dy, dx) - pose.theta)
    if abs(alpha) > math.pi / 2:
        return Twist(0.0, max(-params.omega_max, min(params.omega_max, alpha / dt)))
    # circular arc tangent to the heading that ends at the target
    arc = dist if abs(alpha) < 1e-9 else dist * alpha / math.sin(alpha)
    v, w = arc / dt, 2.0 * alpha / dt
    scale = min(1.0, params.v_max / v if v > 0 else 1.0, params.omega_max / abs(w) if w else 1.0)
    return Twist(v * scale, w * scale)


def _poses_along(points: np.ndarray, theta0: float) -> List[Pose2D]:
    poses = [Pose2D(points[0, 0], points[0, 1], theta0)]
    theta = theta0
    for a, b in zip(points[:-1], points[1:]):
        d = b - a
        if math.hypot(d[0], d[1]) > 1e-6:
            theta = math.atan2(d[1], d[0])
        poses.append(Pose2D(b[0], b[1], theta))
    return poses


def build_problem(global_path, pose: Pose2D, twist: Twist, obstacles: Sequence[BevObstacle] = (),
                  params: LocalPlannerParams = LocalPlannerParams(), static_points=None,
                  now: Optional[float] = None, v_ref: Optional[float] = None) -> BandProblem:
    path = _path_points(global_path)
    if path.size == 0:
        raise ValueError('global_path must not be empty')
    dt = params.dt
    times = dt * np.arange(1, params.n_nodes + 1)
    p0 = np.array([pose.x, pose.y])
    speed = params.v_ref if v_ref is None else v_ref
    reference = reference_points(path, p0, speed * times)
    if now is None:
        now = max((ob.stamp for ob in obstacles), default=0.0)
    obs, radii = _obstacle_arrays(obstacles, static_points, p0, np.concatenate(([0.0], times)), now, params)
    p_prev = p0 - twist.v * dt * np.array([math.cos(pose.theta), math.sin(pose.theta)])
    return BandProblem(p0, p_prev, reference, obs[1:], radii, params, obs[:1])


def plan_local(global_path, pose: Pose2D, twist: Twist, obstacles: Sequence[BevObstacle] = (),
               params: LocalPlannerParams = LocalPlannerParams(), static_points=None,
               now: Optional[float] = None) -> LocalTrajectory:
    """Optimize the band from each initial speed profile and keep the cheapest.

    Args:
        global_path: PlanPath, list of Pose2D or (M, 2) points
        pose: current robot pose
        twist: current robot twist
        obstacles: BEV obstacles with velocities
        params: planner parameters
        static_points: (K, 2) map-frame points (scan end points, hazard cells)
        now: time the obstacle predictions are taken from (latest obstacle stamp by default)

    Returns:
        LocalTrajectory with the first-step twist, zero when stopping for safety
    """
    prob = build_problem(global_path, pose, twist, obstacles, params, static_points, now)
    dt = params.dt
    times = dt * np.arange(0, params.n_nodes + 1)
    path = _path_points(global_path)

    best = None
    for profile in params.speed_profiles:
        init = reference_points(path, prob.p0, profile * params.v_ref * times[1:])
        nodes, cost, history, diverged = optimize_band(init, prob)
        if diverged:
            logger.warning(f'local planner diverged (cost={cost}); stopping')
            return LocalTrajectory(_poses_along(np.vstack((prob.p0, init)), pose.theta), times, Twist(0.0, 0.0),
                                   cost, history, stopped=True, diverged=True,
                                   diagnostic='non-finite cost or gradient', profile=profile)
        if best is None or cost < best[1]:
            best = (nodes, cost, history, profile)

    nodes, cost, history, profile = best
    points = np.vstack((prob.p0, nodes))
    predicted = np.concatenate((prob.obstacles_now, prob.obstacles), axis=0)
    clearance = min_clearance(points, predicted, prob.radii, params.robot_radius)
    trajectory = LocalTrajectory(_poses_along(points, pose.theta), times, _first_twist(pose, nodes[0], dt, params),
                                 cost, history, clearance, profile=profile)
    if clearance < params.r_stop:
        logger.warning(f'safety stop: predicted clearance {clearance:.2f} m < {params.r_stop} m')
        trajectory.twist = Twist(0.0, 0.0)
        trajectory.stopped = True
        trajectory.diagnostic = f'clearance {clearance:.3f} m'
    return trajectory

"""
Differential-absorption gas camera.

Each pixel integrates the methane concentration along its ray (Gauss-Legendre
nodes on 0.05 m segments) up to the first wall, the ground or max_ray. The three
frames are the background radiance attenuated by Beer-Lambert at the off-line
(wing) and on-line (centre) absorption coefficients.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from simworld.geometry import raycast_many
from simworld.plume import DispersionParams, total_concentration
from simworld.types import Pose2D, Species, WorldState
from utils.guards import check_positive
from utils.rng import derive_rng
from .types import FrameTriple


@dataclass(frozen=True)
class GasCameraParams:
    width: int = 32
    height: int = 24
    h_fov: float = math.radians(30.0)
    pitch: float = math.radians(-12.0)
    mount_height: float = 0.5
    max_ray: float = 10.0
    step: float = 0.05
    nodes: int = 4
    i0: float = 1000.0
    alpha_off: float = 0.0
    delta_alpha: float = 1e-4
    shot_noise: float = 2e-5

    @property
    def v_fov(self) -> float:
        return self.h_fov * self.height / self.width


def pixel_rays(params: GasCameraParams) -> Tuple[np.ndarray, np.ndarray]:
    """(azimuths per column, left first; elevations per row, top first), robot frame."""
    cols = (np.arange(params.width) + 0.5) / params.width
    rows = (np.arange(params.height) + 0.5) / params.height
    azimuths = params.h_fov / 2.0 - cols * params.h_fov
    elevations = params.pitch + params.v_fov / 2.0 - rows * params.v_fov
    return azimuths, elevations


def ray_lengths(world: WorldState, pose: Pose2D, params: GasCameraParams) -> np.ndarray:
    """Slant length of every pixel ray to its first wall, the ground or max_ray, shape (rows, cols)."""
    az, el = pixel_rays(params)
    wall = raycast_many(world.grid, pose, pose.theta + az, params.max_ray)
    cos_e = np.cos(el)[:, None]
    sin_e = np.sin(el)[:, None]
    with np.errstate(divide='ignore'):
        ground = np.where(sin_e < 0, params.mount_height / -sin_e, np.inf)
    return np.minimum(np.minimum(wall[None, :] / cos_e, ground), params.max_ray)


def gas_camera_cl(world: WorldState, pose: Pose2D, params: GasCameraParams = GasCameraParams(),
                  dispersion: DispersionParams = DispersionParams()) -> np.ndarray:
    """Methane concentration-length (ppm*m) per pixel."""
    az, el = pixel_rays(params)
    length = ray_lengths(world, pose, params)
    n_steps = int(math.ceil(params.max_ray / params.step))
    starts = np.arange(n_steps) * params.step
    seg = np.clip(length[:, :, None] - starts[None, None, :], 0.0, params.step)[..., None]
    nodes, weights = np.polynomial.legendre.leggauss(params.nodes)
    # (rows, cols, segments, nodes)
    s = starts[None, None, :, None] + seg * (nodes + 1.0) / 2.0
    horiz = s * np.cos(el)[:, None, None, None]
    heading = pose.theta + az[None, :, None, None]
    xs = pose.x + horiz * np.cos(heading)
    ys = pose.y + horiz * np.sin(heading)
    zs = np.maximum(params.mount_height + s * np.sin(el)[:, None, None, None], 0.0)
    conc = total_concentration(world.plumes, xs, ys, Species.METHANE, zs, dispersion)
    return np.sum(conc * weights * seg / 2.0, axis=(2, 3))


def background_radiance(seed: int, params: GasCameraParams) -> np.ndarray:
    """Static per-pixel scene reflectance times I0, identical for every frame."""
    rng = derive_rng(seed, 'gascam_texture')
    return params.i0 * rng.uniform(0.6, 1.0, size=(params.height, params.width))


def render_triple(cl: np.ndarray, radiance: np.ndarray, params: GasCameraParams,
                  rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Beer-Lambert images (wing-, centre, wing+) for a CL field; noise-free when rng is None."""
    check_positive(params.delta_alpha, 'delta_alpha')
    wing = radiance * np.exp(-params.alpha_off * cl)
    center = radiance * np.exp(-(params.alpha_off + params.delta_alpha) * cl)
    frames = [wing, center, wing.copy()]
    if rng is not None and params.shot_noise > 0:
        frames = [f * (1.0 + rng.normal(0.0, params.shot_noise, size=f.shape)) for f in frames]
    return frames[0], frames[1], frames[2]


def gas_camera_capture(world: WorldState, pose: Pose2D, params: GasCameraParams = GasCameraParams(),
                       dispersion: DispersionParams = DispersionParams()) -> FrameTriple:
    cl = gas_camera_cl(world, pose, params, dispersion)
    rng = derive_rng(world.rng_seed, 'gascam', world.tick)
    wm, c, wp = render_triple(cl, background_radiance(world.rng_seed, params), params, rng)
    az, el = pixel_rays(params)
    return FrameTriple(wm, c, wp, az, el, world.time, pose, params.delta_alpha)

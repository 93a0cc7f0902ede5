"""
Scenario files (YAML) and map bitmaps.

A scenario lists the map, the leak plumes, sound sources, oil patches,
dynamic agents, wind schedule and the seed. ``variants`` holds named partial
overrides (for example a second inspection round with a moved pallet); the
unmodified scenario always provides the reference map the robot localizes in.

Map files are an 8-bit grayscale PNG (0 = occupied, 255 = free) plus a YAML
sidecar with ``image``, ``resolution`` and ``origin``.
"""
import copy
import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional

import matplotlib
matplotlib.use('Agg')
import matplotlib.image as mpimg
import numpy as np
import yaml

from config import ConfigError, deep_merge, read_yaml
from .geometry import fill_rect
from .types import (LOGODDS_CLAMP, AcousticSource, DynamicAgent, GasPlume, OccupancyGrid, OilPatch,
                    Pose2D, ScheduleEvent, Waveform, WorldParams, WorldState)

logger = logging.getLogger(__name__)


@dataclass
class Scenario:
    name: str
    seed: int
    world: WorldState
    reference_grid: OccupancyGrid
    digest: str
    variant: Optional[str] = None
    path: Optional[Path] = None
    sensors: Dict[str, Any] = field(default_factory=dict)
    raw: Dict[str, Any] = field(default_factory=dict)


def load_map(sidecar_path) -> OccupancyGrid:
    sidecar_path = Path(sidecar_path)
    meta = read_yaml(sidecar_path)
    image_path = sidecar_path.parent / meta['image']
    if not image_path.exists():
        raise ConfigError(f'map image not found: {image_path}')
    img = mpimg.imread(str(image_path))
    if np.issubdtype(img.dtype, np.floating):
        img = np.round(img * 255.0)
    origin = meta.get('origin', [0.0, 0.0])
    return OccupancyGrid.from_bitmap(img, float(meta['resolution']), Pose2D(origin[0], origin[1]))


def save_map(grid: OccupancyGrid, sidecar_path) -> Path:
    """Write ``<name>.png`` and the ``<name>.yaml`` sidecar; returns the sidecar path."""
    sidecar_path = Path(sidecar_path).with_suffix('.yaml')
    sidecar_path.parent.mkdir(parents=True, exist_ok=True)
    image_path = sidecar_path.with_suffix('.png')
    mpimg.imsave(str(image_path), grid.to_bitmap(), cmap='gray', vmin=0, vmax=255)
    meta = {'image': image_path.name, 'resolution': grid.resolution,
            'origin': [grid.origin.x, grid.origin.y]}
    with open(sidecar_path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(meta, f, sort_keys=True)
    return sidecar_path


def build_grid(map_cfg: Dict[str, Any], base_dir: Optional[Path] = None) -> OccupancyGrid:
    """Grid from a bitmap sidecar or from box geometry (size, walls, objects, channels)."""
    if 'bitmap' in map_cfg:
        path = Path(map_cfg['bitmap'])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        grid = load_map(path)
    else:
        try:
            size_x, size_y = (float(v) for v in map_cfg['size'])
            res = float(map_cfg.get('resolution', 0.1))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f'map needs size: [x, y] and a resolution: {e}') from e
        origin = map_cfg.get('origin', [0.0, 0.0])
        grid = OccupancyGrid.empty(int(round(size_x / res)), int(round(size_y / res)), res,
                                   Pose2D(origin[0], origin[1]), logodds=-LOGODDS_CLAMP)
        border = float(map_cfg.get('border', 0.0))
        if border > 0:
            x0, y0, x1, y1 = grid.extent()
            for rect in ((x0, y0, x1, y0 + border), (x0, y1 - border, x1, y1),
                         (x0, y0, x0 + border, y1), (x1 - border, y0, x1, y1)):
                fill_rect(grid, rect, LOGODDS_CLAMP)
    for rect in map_cfg.get('walls', []) or []:
        fill_rect(grid, rect, LOGODDS_CLAMP)
    for obj in map_cfg.get('objects', []) or []:
        fill_rect(grid, obj['rect'], LOGODDS_CLAMP)
    for channel in map_cfg.get('channels', []) or []:
        x0, y0, x1, y1 = (float(v) for v in channel['rect'])
        xs, ys = grid.cell_centers()
        mask = (xs >= min(x0, x1)) & (xs <= max(x0, x1)) & (ys >= min(y0, y1)) & (ys <= max(y0, y1))
        grid.ground_depth[mask] = float(channel.get('depth', 1.0))
    return grid


def _waveform(cfg: Dict[str, Any]) -> Waveform:
    return Waveform(kind=cfg.get('kind', 'tone'), freqs=tuple(cfg.get('freqs', ())),
                    amplitudes=tuple(cfg.get('amplitudes', ())), seed=int(cfg.get('seed', 0)),
                    noise_level=float(cfg.get('noise_level', 0.0)),
                    burst_period=float(cfg.get('burst_period', 0.0)),
                    burst_duty=float(cfg.get('burst_duty', 1.0)))


def _schedule(cfg: Dict[str, Any]) -> ScheduleEvent:
    at = float(cfg['at'])
    if 'wind' in cfg:
        return ScheduleEvent(at, 'wind', tuple(sorted((k, float(v)) for k, v in cfg['wind'].items())))
    if 'plume' in cfg:
        return ScheduleEvent(at, str(cfg['plume']), (('emission_rate', float(cfg['emission_rate'])),))
    raise ConfigError(f'schedule entry needs wind or plume: {cfg!r}')


def build_world(data: Dict[str, Any], grid: OccupancyGrid, seed: int,
                params: Optional[WorldParams] = None) -> WorldState:
    wind_cfg = data.get('wind', {}) or {}
    wind = (float(wind_cfg.get('speed', 1.0)), float(wind_cfg.get('direction', 0.0)))
    plumes = tuple(GasPlume(source=tuple(p['source']), emission_rate=float(p['emission_rate']), wind=wind,
                            species=p.get('species', 'methane'), height=float(p.get('height', 0.0)),
                            id=str(p.get('id', f'plume{i}')))
                   for i, p in enumerate(data.get('plumes', []) or []))
    sources = tuple(AcousticSource(position=tuple(s['position']), waveform=_waveform(s.get('waveform', {})),
                                   level=float(s.get('level', 1.0)), anomalous=bool(s.get('anomalous', False)),
                                   category=str(s.get('category', 'pump')), id=str(s.get('id', f'source{i}')))
                    for i, s in enumerate(data.get('sources', []) or []))
    patches = tuple(OilPatch(center=tuple(p['center']), radius=float(p['radius']),
                             fluorescence_gain=float(p.get('fluorescence_gain', 1.0)),
                             id=str(p.get('id', f'patch{i}')))
                    for i, p in enumerate(data.get('patches', []) or []))
    agents = tuple(DynamicAgent(id=str(a.get('id', f'agent{i}')), footprint_radius=float(a['footprint_radius']),
                                waypoints=tuple(tuple(w) for w in a['waypoints']), speed=float(a['speed']),
                                agent_class=a.get('class', 'pedestrian'))
                   for i, a in enumerate(data.get('agents', []) or []))
    schedules = tuple(_schedule(s) for s in data.get('schedules', []) or [])
    robot = (data.get('robot', {}) or {}).get('pose', [0.0, 0.0, 0.0])
    params = params or WorldParams()
    if 'humidity' in data:
        params = replace(params, humidity=float(data['humidity']))
    return WorldState(time=0.0, grid=grid, plumes=plumes, sources=sources, patches=patches, agents=agents,
                      robot_pose=Pose2D(*robot), rng_seed=int(seed), wind=wind, base_wind=wind,
                      schedules=schedules, params=params)


def scenario_digest(path: Optional[Path], data: Dict[str, Any], variant: Optional[str]) -> str:
    h = hashlib.sha256()
    if path is not None and Path(path).exists():
        h.update(Path(path).read_bytes())
    else:
        h.update(yaml.safe_dump(data, sort_keys=True).encode('utf-8'))
    h.update(f'|variant={variant or ""}'.encode('utf-8'))
    return h.hexdigest()


def scenario_from_dict(data: Dict[str, Any], variant: Optional[str] = None, seed: Optional[int] = None,
                       params: Optional[WorldParams] = None, path: Optional[Path] = None) -> Scenario:
    base_dir = Path(path).parent if path is not None else None
    variants = data.get('variants', {}) or {}
    if variant is not None and variant not in variants:
        raise ConfigError(f'scenario has no variant {variant!r} (known: {", ".join(sorted(variants)) or "none"})')
    effective = copy.deepcopy(data)
    if variant is not None:
        deep_merge(effective, variants[variant])
    reference = build_grid(data.get('map', {}), base_dir)
    grid = reference if variant is None else build_grid(effective.get('map', {}), base_dir)
    seed = int(effective.get('seed', 0) if seed is None else seed)
    world = build_world(effective, grid.copy(), seed, params)
    name = str(effective.get('name', Path(path).stem if path else 'scenario'))
    logger.info(f'Scenario {name} loaded (variant={variant}, seed={seed}, '
                f'{len(world.plumes)} plumes, {len(world.sources)} sources, {len(world.agents)} agents)')
    return Scenario(name=name, seed=seed, world=world, reference_grid=reference,
                    digest=scenario_digest(path, data, variant), variant=variant,
                    path=Path(path) if path else None, sensors=dict(effective.get('sensors', {}) or {}),
                    raw=effective)


def load_scenario(path, variant: Optional[str] = None, seed: Optional[int] = None,
                  params: Optional[WorldParams] = None) -> Scenario:
    """Load a scenario YAML file.

    Args:
        path: scenario file
        variant: name of an entry under ``variants`` to overlay, or None
        seed: overrides the file's seed when given
        params: world stepping parameters (wind meander, odometry noise, limits)

    Returns:
        Scenario with the world at t = 0 and the unmodified reference map
    """
    path = Path(path)
    return scenario_from_dict(read_yaml(path), variant=variant, seed=seed, params=params, path=path)

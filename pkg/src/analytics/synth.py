"""
Synthetic training data: pump, vehicle and anomalous sounds, and leak captures.
"""
import logging
import math
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from sensors.gascam import GasCameraParams, gas_camera_capture
from sensors.microphone import MicParams
from sensors.types import MicFrame
from simworld.acoustics import SPEED_OF_SOUND, render_waveform
from simworld.scenario import build_grid, build_world
from simworld.types import Pose2D, Waveform, WaveformKind, WorldParams
from simworld.world import step_world
from .features import SpectrumFeatureSpec, spectrum_features
from .gas_imaging import GasImage, concentration_length

logger = logging.getLogger(__name__)


def synth_frame(waveform: Waveform, azimuth_deg: float = 0.0, duration: float = 0.25, snr_db: Optional[float] = 20.0,
                seed: int = 0, params: MicParams = MicParams(), t0: float = 0.0) -> MicFrame:
    """Far-field plane wave from ``azimuth_deg`` (robot frame) on the circular array, plus white noise."""
    n = int(round(duration * params.fs))
    t = t0 + np.arange(n) / params.fs
    angles = 2.0 * np.pi * np.arange(params.n_mics) / params.n_mics
    positions = params.radius * np.column_stack((np.cos(angles), np.sin(angles)))
    az = math.radians(azimuth_deg)
    lead = positions @ np.array([math.cos(az), math.sin(az)]) / SPEED_OF_SOUND
    channels = np.vstack([render_waveform(waveform, t + lead_m) for lead_m in lead])
    if snr_db is not None:
        power = float(np.mean(channels ** 2))
        sigma = math.sqrt(power / 10.0 ** (snr_db / 10.0)) if power > 0 else params.noise_floor
        rng = np.random.default_rng([seed, 0x6E6F6973])
        channels = channels + rng.normal(0.0, sigma, size=channels.shape)
    return MicFrame(params.fs, channels, t0, params.radius, angles)


def _harmonics(f0: float, count: int, decay: float) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    freqs = tuple(f0 * (k + 1) for k in range(count))
    return freqs, tuple(decay ** k for k in range(count))


def pump_waveform(rng: np.random.Generator) -> Waveform:
    freqs, amps = _harmonics(rng.uniform(100.0, 300.0), 4, 0.6)
    return Waveform(WaveformKind.MULTITONE, freqs, amps, int(rng.integers(1 << 31)), noise_level=0.02)


def anomalous_waveform(rng: np.random.Generator) -> Waveform:
    return Waveform(WaveformKind.BROADBAND, (), (), int(rng.integers(1 << 31)), noise_level=1.0,
                    burst_period=float(rng.uniform(0.05, 0.15)), burst_duty=float(rng.uniform(0.3, 0.6)))


def car_waveform(rng: np.random.Generator) -> Waveform:
    freqs, amps = _harmonics(rng.uniform(80.0, 150.0), 6, 0.8)
    return Waveform(WaveformKind.MULTITONE, freqs, amps, int(rng.integers(1 << 31)), noise_level=0.2)


def truck_waveform(rng: np.random.Generator) -> Waveform:
    freqs, amps = _harmonics(rng.uniform(30.0, 60.0), 10, 0.85)
    return Waveform(WaveformKind.MULTITONE, freqs, amps, int(rng.integers(1 << 31)), noise_level=1.0)


GENERATORS = {'pump': pump_waveform, 'car': car_waveform, 'truck': truck_waveform, 'anomalous': anomalous_waveform}


def sound_features(kind: str, n: int, seed: int = 0, snr_db: float = 20.0,
                   spec: SpectrumFeatureSpec = SpectrumFeatureSpec(), params: MicParams = MicParams()) -> np.ndarray:
    """(n, 64) feature vectors of synthetic ``kind`` sounds from random directions."""
    rng = np.random.default_rng([seed, len(kind), sum(kind.encode('ascii'))])
    make = GENERATORS[kind]
    rows = []
    for _ in range(n):
        frame = synth_frame(make(rng), rng.uniform(0.0, 360.0), params.frame_duration, snr_db,
                            seed=int(rng.integers(1 << 31)), params=params, t0=float(rng.uniform(0.0, 100.0)))
        rows.append(spectrum_features(frame, spec))
    return np.array(rows)


def sound_class_dataset(n_per_class: int, seed: int = 0, snr_db: float = 20.0,
                        spec: SpectrumFeatureSpec = SpectrumFeatureSpec()) -> Tuple[np.ndarray, List[str]]:
    feats, labels = [], []
    for k, cls in enumerate(('pump', 'car', 'truck')):
        feats.append(sound_features(cls, n_per_class, seed + k, snr_db, spec))
        labels.extend([cls] * n_per_class)
    return np.vstack(feats), labels


def leak_world(rate: float, seed: int, offset: Tuple[float, float] = (0.0, 0.0), wind_speed: float = 1.0,
               params: WorldParams = WorldParams()):
    """Empty 12 x 8 m hall with one methane leak; wind blows along +x at ``wind_speed``."""
    data = {'map': {'size': [12.0, 8.0], 'resolution': 0.1, 'border': 0.2},
            'wind': {'speed': wind_speed, 'direction': 0.0},
            'plumes': [{'id': 'leak', 'source': [3.0 + offset[0], 5.0 + offset[1]], 'emission_rate': rate,
                        'species': 'methane'}],
            'robot': {'pose': [5.0, 3.0, math.pi / 2]}}
    return build_world(data, build_grid(data['map']), seed, params)


def capture_sequence(world, pose: Pose2D, frames: int = 5, period: float = 0.2,
                     camera: GasCameraParams = GasCameraParams(), dark_floor: float = 1.0) -> List[GasImage]:
    """CL images of a stationary capture at ``1 / period`` Hz, stepping the world between frames."""
    images = []
    dt = world.params.dt
    steps = max(int(round(period / dt)), 1)
    for _ in range(frames):
        images.append(concentration_length(gas_camera_capture(world, pose, camera), dark_floor))
        for _ in range(steps):
            world = step_world(world, dt)
    return images


def flow_dataset(rates: Sequence[float], seed: int = 0, distance: float = 2.0, frames: int = 5,
                 camera: GasCameraParams = GasCameraParams()) -> List[Tuple[List[GasImage], float]]:
    """Labelled capture sequences; the camera sits ``distance`` m crosswind of the plume axis."""
    rng = np.random.default_rng([seed, 0x666C6F77])
    out = []
    for rate in rates:
        offset = (float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.2, 0.2)))
        world = leak_world(float(rate), int(rng.integers(1 << 31)), offset)
        world = replace(world, time=float(rng.uniform(0.0, 20.0)))
        pose = Pose2D(5.0, 5.0 + offset[1] - distance, math.pi / 2)
        out.append((capture_sequence(world, pose, frames, camera=camera), float(rate)))
    logger.info(f'Synthesised {len(out)} leak captures ({min(rates):.0f}-{max(rates):.0f} mL/min)')
    return out

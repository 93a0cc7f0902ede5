"""
Five-microphone uniform circular array.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from simworld.acoustics import acoustic_field, render_waveform
from simworld.types import Pose2D, WorldState
from utils.rng import derive_rng
from .types import MicFrame, uca_radius

MIN_DURATION = 0.010


@dataclass(frozen=True)
class MicParams:
    fs: float = 96000.0
    n_mics: int = 5
    spacing: float = 0.08
    frame_duration: float = 0.25
    snr_db: Optional[float] = 20.0
    noise_floor: float = 1e-3

    @property
    def radius(self) -> float:
        return uca_radius(self.n_mics, self.spacing)


def mic_world_positions(pose: Pose2D, params: MicParams) -> np.ndarray:
    angles = pose.theta + 2.0 * np.pi * np.arange(params.n_mics) / params.n_mics
    return np.column_stack((pose.x + params.radius * np.cos(angles), pose.y + params.radius * np.sin(angles)))


def mic_capture(world: WorldState, pose: Pose2D, duration: float, snr_db: Optional[float] = 20.0,
                params: MicParams = MicParams()) -> MicFrame:
    """Synthesize the array signals for ``duration`` seconds starting at world.time.

    Channel m is the sum over sources of gain * w(t - r_m / c). Tonal parts are
    evaluated in closed form; the seeded broadband lattice is linearly
    interpolated at the fractional delay. White noise is scaled to ``snr_db``
    against the strongest source (mean power over channels); with no sources
    the frame is noise at ``noise_floor`` RMS. ``snr_db=None`` adds no noise.
    """
    if not math.isfinite(duration) or duration < MIN_DURATION:
        raise ValueError(f'duration must be >= {MIN_DURATION} s, got {duration!r}')
    n = int(round(duration * params.fs))
    t = world.time + np.arange(n) / params.fs
    positions = mic_world_positions(pose, params)
    channels = np.zeros((params.n_mics, n))
    strongest = 0.0
    per_mic = [acoustic_field(world, p, world.time, duration, params.fs) for p in positions]
    for k in range(len(world.sources)):
        contribution = np.vstack([field_m[k].gain * render_waveform(field_m[k].waveform, t - field_m[k].delay)
                                  for field_m in per_mic])
        strongest = max(strongest, float(np.mean(contribution ** 2)))
        channels += contribution

    sigma = 0.0
    if not world.sources:
        sigma = params.noise_floor
    elif snr_db is not None:
        sigma = math.sqrt(strongest / 10.0 ** (snr_db / 10.0))
    if sigma > 0:
        rng = derive_rng(world.rng_seed, 'mic', world.tick)
        channels = channels + rng.normal(0.0, sigma, size=channels.shape)
    return MicFrame(fs=params.fs, channels=channels, stamp=world.time, radius=params.radius,
                    mic_angles=2.0 * np.pi * np.arange(params.n_mics) / params.n_mics)

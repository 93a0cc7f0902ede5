"""
Sound sources: waveform rendering and free-field propagation.
"""
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from utils.guards import check_finite, check_positive
from .types import AcousticSource, Waveform, WaveformKind, WorldState

SPEED_OF_SOUND = 343.0
REFERENCE_DISTANCE = 0.1
NOISE_FS = 96000
NOISE_BLOCK = 4096
_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class Propagation:
    source_id: str
    delay: float
    gain: float
    waveform: Waveform
    distance: float


def _phases(waveform: Waveform) -> np.ndarray:
    rng = np.random.default_rng([waveform.seed & _MASK64, 0x70686173])
    return rng.uniform(0.0, 2.0 * math.pi, size=len(waveform.freqs))


def _noise_block(seed: int, block: int) -> np.ndarray:
    return np.random.default_rng([seed & _MASK64, block & _MASK64]).standard_normal(NOISE_BLOCK)


def broadband_noise(seed: int, t) -> np.ndarray:
    """Seeded unit-variance white noise defined on the 96 kHz sample lattice, linearly interpolated.

    Samples are generated per 4096-sample block from (seed, block index), so a
    value at time t never depends on which window was rendered.
    """
    t = np.asarray(t, dtype=float)
    pos = t * NOISE_FS
    n0 = np.floor(pos).astype(np.int64)
    frac = pos - n0
    if t.size == 0:
        return np.zeros_like(t)
    first = int(n0.min()) // NOISE_BLOCK
    last = (int(n0.max()) + 1) // NOISE_BLOCK
    table = np.concatenate([_noise_block(seed, b) for b in range(first, last + 1)])
    i0 = n0 - first * NOISE_BLOCK
    return table[i0] * (1.0 - frac) + table[i0 + 1] * frac


def burst_gate(waveform: Waveform, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if waveform.burst_period <= 0.0:
        return np.ones_like(t)
    phase = np.mod(t, waveform.burst_period)
    return (phase < waveform.burst_duty * waveform.burst_period).astype(float)


def render_waveform(waveform: Waveform, t) -> np.ndarray:
    """Unit-level signal value at arbitrary times t (seconds)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    if waveform.kind is not WaveformKind.BROADBAND:
        for f, a, phi in zip(waveform.freqs, waveform.amplitudes, _phases(waveform)):
            out += a * np.sin(2.0 * math.pi * f * t + phi)
    if waveform.noise_level > 0.0:
        out += waveform.noise_level * burst_gate(waveform, t) * broadband_noise(waveform.seed, t)
    return out


def propagate(source: AcousticSource, position: Tuple[float, float]) -> Propagation:
    r = math.hypot(source.position[0] - position[0], source.position[1] - position[1])
    return Propagation(source.id, r / SPEED_OF_SOUND, source.level / max(r, REFERENCE_DISTANCE),
                       source.waveform, r)


def acoustic_field(world: WorldState, mic_position, t0: float, duration: float, fs: float) -> List[Propagation]:
    """Per-source delay (r / c), spherical-spreading gain and waveform at a microphone position."""
    check_finite(mic_position, 'mic_position')
    check_finite(t0, 't0')
    check_positive(duration, 'duration')
    check_positive(fs, 'fs')
    if fs != NOISE_FS:
        raise ValueError(f'fs must be {NOISE_FS} Hz, the rate the broadband lattice is defined on; got {fs!r}')
    pos = (float(mic_position[0]), float(mic_position[1]))
    return [propagate(src, pos) for src in world.sources]

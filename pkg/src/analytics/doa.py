"""
Direction of arrival with SRP-PHAT on the circular microphone array.

Two spectra are available. ``srp`` sums the PHAT-steered response over the
frequency bins of the band (the classic form). ``srp_bins`` (default) takes
each bin's steered-response peak and accumulates it, weighted by the bin's
share of cross-power, through a narrow Gaussian kernel; tonal sources closer
together than the array beamwidth then still give separate peaks.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np
from scipy.signal import get_window

from sensors.types import MicFrame
from simworld.acoustics import SPEED_OF_SOUND

logger = logging.getLogger(__name__)

METHODS = ('srp_bins', 'srp')


@dataclass(frozen=True)
class DoaParams:
    nfft: int = 1024
    hop: int = 512
    f_band: Tuple[float, float] = (300.0, 2000.0)
    grid_deg: float = 1.0
    peak_ratio: float = 0.5
    min_separation_deg: float = 10.0
    kernel_deg: float = 2.0
    max_sources: int = 4
    method: str = 'srp_bins'

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f'unknown DOA method {self.method!r} (use one of {", ".join(METHODS)})')
        if self.hop < 1 or self.nfft < 16:
            raise ValueError('nfft must be >= 16 and hop >= 1')


@dataclass
class DoaResult:
    """Azimuths in robot-frame degrees (counter-clockwise, strongest first); powers on the 1 deg grid."""
    azimuths: List[float]
    powers: np.ndarray
    grid: np.ndarray = field(default_factory=lambda: np.arange(0.0, 360.0, 1.0))
    method: str = 'srp_bins'

    @property
    def strongest(self) -> float:
        return self.azimuths[0] if self.azimuths else float('nan')


def aliasing_limit(spacing: float, c: float = SPEED_OF_SOUND) -> float:
    """Highest frequency (Hz) without spatial aliasing for neighbour spacing ``spacing``."""
    return c / (2.0 * spacing)


def stft(channels: np.ndarray, nfft: int, hop: int) -> np.ndarray:
    """(n_mics, n_frames, nfft // 2 + 1) Hann-windowed spectra."""
    n = channels.shape[1]
    starts = np.arange(0, n - nfft + 1, hop)
    window = get_window('hann', nfft)
    idx = starts[:, None] + np.arange(nfft)[None, :]
    return np.fft.rfft(channels[:, idx] * window, axis=-1)


def _pairs(n: int) -> Tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(n, k=1)
    return i, j


def steered_response(frame: MicFrame, params: DoaParams, c: float = SPEED_OF_SOUND):
    """Per-bin steered response (n_bins, n_grid), bin cross-power and the azimuth grid (deg)."""
    X = stft(frame.channels, params.nfft, params.hop)
    freqs = np.fft.rfftfreq(params.nfft, 1.0 / frame.fs)
    lo, hi = params.f_band
    band = np.nonzero((freqs >= lo) & (freqs <= hi))[0]
    if band.size == 0:
        raise ValueError(f'no FFT bins inside {params.f_band} Hz at fs={frame.fs}')
    Xb = X[:, :, band]
    mag = np.abs(Xb)
    whitened = Xb / np.maximum(mag, 1e-20)

    i, j = _pairs(frame.n_mics)
    cross = np.mean(whitened[i] * np.conj(whitened[j]), axis=1)            # (pairs, bins)
    raw_power = np.abs(np.mean(Xb[i] * np.conj(Xb[j]), axis=1)).sum(axis=0)  # (bins,)

    grid = np.arange(0.0, 360.0, params.grid_deg)
    theta = np.radians(grid)
    pos = frame.positions()
    u = np.column_stack((np.cos(theta), np.sin(theta)))
    # plane wave from theta reaches mic m earlier by (p_m . u) / c
    lead = pos @ u.T / c                                                      # (mics, grid)
    tdoa = lead[i] - lead[j]                                                  # (pairs, grid)
    phase = np.exp(-2j * math.pi * freqs[band][None, :, None] * tdoa[:, None, :])
    response = np.real(np.sum(cross[:, :, None] * phase, axis=0))           # (bins, grid)
    return response, raw_power, grid


def find_peaks(powers: np.ndarray, grid: np.ndarray, ratio: float, min_separation: float,
               max_peaks: int) -> List[float]:
    """Circular local maxima above ratio * max, strongest first, at least min_separation degrees apart."""
    left, right = np.roll(powers, 1), np.roll(powers, -1)
    is_peak = (powers >= left) & (powers > right) & (powers >= ratio * powers.max())
    order = np.argsort(-powers[is_peak], kind='stable')
    candidates = grid[is_peak][order]
    chosen: List[float] = []
    for az in candidates:
        if all(abs((az - c + 180.0) % 360.0 - 180.0) >= min_separation for c in chosen):
            chosen.append(float(az))
        if len(chosen) >= max_peaks:
            break
    return chosen


def doa_estimate(frame: MicFrame, f_band: Tuple[float, float] = None, params: DoaParams = DoaParams(),
                 c: float = SPEED_OF_SOUND) -> DoaResult:
    """Estimate source azimuths from one array frame.

    Args:
        frame: multichannel capture (channels x samples)
        f_band: analysis band in Hz; defaults to ``params.f_band``
        params: STFT, grid and peak-picking settings
        c: speed of sound (m/s)

    Returns:
        DoaResult with the normalised spectrum and the detected peaks
    """
    if f_band is not None:
        params = replace(params, f_band=tuple(f_band))
    lo, hi = params.f_band
    if not (0.0 < lo < hi <= frame.fs / 2.0):
        raise ValueError(f'f_band must satisfy 0 < low < high <= fs/2, got {params.f_band}')
    if frame.n_samples < params.nfft:
        raise ValueError(f'frame has {frame.n_samples} samples, fewer than one FFT window ({params.nfft})')
    if frame.n_mics < 2:
        raise ValueError('DOA needs at least two microphones')
    spacing = 2.0 * frame.radius * math.sin(math.pi / frame.n_mics)
    if hi > aliasing_limit(spacing, c):
        logger.warning(f'band upper edge {hi:.0f} Hz is above the aliasing limit '
                       f'{aliasing_limit(spacing, c):.0f} Hz of this array')

    response, raw_power, grid = steered_response(frame, params, c)
    if params.method == 'srp':
        powers = response.sum(axis=0)
        powers = powers - powers.min()
    else:
        weights = raw_power / max(raw_power.sum(), 1e-30)
        best = grid[np.argmax(response, axis=1)]
        diff = (grid[None, :] - best[:, None] + 180.0) % 360.0 - 180.0
        kernel = np.exp(-0.5 * (diff / params.kernel_deg) ** 2)
        powers = weights @ kernel
    peak = powers.max()
    powers = powers / peak if peak > 0 else np.zeros_like(powers)
    azimuths = find_peaks(powers, grid, params.peak_ratio, params.min_separation_deg, params.max_sources) \
        if peak > 0 else []
    logger.debug(f'DOA ({params.method}) peaks: {azimuths}')
    return DoaResult(azimuths, powers, grid, params.method)

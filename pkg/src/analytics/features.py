"""
Spectral features shared by the anomaly autoencoder and the sound classifier.
"""
from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

from sensors.types import MicFrame


@dataclass(frozen=True)
class SpectrumFeatureSpec:
    n_bands: int = 64
    f_min: float = 50.0
    f_max: float = 8000.0
    nperseg: int = 8192

    def edges(self) -> np.ndarray:
        return np.geomspace(self.f_min, self.f_max, self.n_bands + 1)

    def as_dict(self) -> dict:
        return {'n_bands': self.n_bands, 'f_min': self.f_min, 'f_max': self.f_max, 'nperseg': self.nperseg}


def band_levels(psd: np.ndarray, freqs: np.ndarray, spec: SpectrumFeatureSpec) -> np.ndarray:
    """Mean PSD per log-spaced band; bands narrower than one FFT bin take the interpolated centre value."""
    edges = spec.edges()
    out = np.empty(spec.n_bands)
    for k in range(spec.n_bands):
        sel = (freqs >= edges[k]) & (freqs < edges[k + 1])
        if sel.any():
            out[k] = psd[sel].mean()
        else:
            out[k] = np.interp(np.sqrt(edges[k] * edges[k + 1]), freqs, psd)
    return out


def spectrum_features(frame: MicFrame, spec: SpectrumFeatureSpec = SpectrumFeatureSpec()) -> np.ndarray:
    """64-band log10 spectrum of the channel-averaged power spectrum, level-normalised (mean removed)."""
    nperseg = min(spec.nperseg, frame.n_samples)
    freqs, psd = welch(frame.channels, fs=frame.fs, nperseg=nperseg, axis=-1)
    levels = band_levels(psd.mean(axis=0), freqs, spec)
    logs = np.log10(levels + 1e-20)
    return logs - logs.mean()

"""
Leak flow-rate regression from a short stationary sequence of CL images.

Features per sequence: mean total CL, temporal std of total CL, max
per-pixel CL and mean plume pixel count. A non-negative ridge regression on
standardised features maps them to mL/min, so a larger plume never lowers
the estimate.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
from sklearn.linear_model import Ridge

from .gas_imaging import GasImage

logger = logging.getLogger(__name__)

MIN_FRAMES = 5
FEATURE_NAMES = ('mean_total_cl', 'std_total_cl', 'max_pixel_cl', 'plume_pixels')


@dataclass(eq=False)
class FlowModel:
    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    plume_threshold: float = 5.0
    alpha: float = 1.0
    meta: Dict[str, object] = field(default_factory=dict)

    def predict_features(self, features: np.ndarray) -> float:
        z = (np.asarray(features, dtype=float) - self.feature_mean) / self.feature_std
        return max(float(z @ self.weights + self.bias), 0.0)


def flow_features(seq: Sequence[GasImage], plume_threshold: float = 5.0) -> np.ndarray:
    if len(seq) < MIN_FRAMES:
        raise ValueError(f'flow estimation needs at least {MIN_FRAMES} frames, got {len(seq)}')
    first = seq[0].pose
    for img in seq[1:]:
        if img.pose != first:
            raise ValueError('flow estimation needs a stationary capture (frames taken from different poses)')
    totals = np.array([img.total for img in seq])
    max_pixel = max(float(img.cl[img.valid].max()) if img.valid.any() else 0.0 for img in seq)
    pixels = np.mean([img.plume_pixels(plume_threshold) for img in seq])
    return np.array([totals.mean(), totals.std(), max_pixel, pixels])


def train_flow_model(sequences: Sequence[Sequence[GasImage]], rates: Sequence[float], alpha: float = 1.0,
                     plume_threshold: float = 5.0) -> FlowModel:
    """Fit the regression on labelled capture sequences (rates in mL/min)."""
    X = np.vstack([flow_features(s, plume_threshold) for s in sequences])
    y = np.asarray(rates, dtype=float)
    mean = X.mean(axis=0)
    std = np.where(X.std(axis=0) > 1e-12, X.std(axis=0), 1.0)
    reg = Ridge(alpha=alpha, positive=True)
    reg.fit((X - mean) / std, y)
    model = FlowModel(np.asarray(reg.coef_, dtype=float), float(reg.intercept_), mean, std, plume_threshold, alpha,
                      {'n_sequences': int(len(y)), 'rate_range': [float(y.min()), float(y.max())]})
    logger.info(f'Flow model trained on {len(y)} sequences: weights {np.round(model.weights, 3).tolist()}, '
                f'bias {model.bias:.2f}')
    return model


def estimate_flow_rate(seq: List[GasImage], model: FlowModel) -> float:
    """Leak rate estimate in mL/min (never negative)."""
    return model.predict_features(flow_features(seq, model.plume_threshold))

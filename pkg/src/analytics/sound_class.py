"""
Sound source classification (pump, car, truck) by nearest class centroid.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from sensors.types import MicFrame
from .features import SpectrumFeatureSpec, spectrum_features

logger = logging.getLogger(__name__)

SOUND_CLASSES = ('pump', 'car', 'truck')


@dataclass(eq=False)
class SoundClassModel:
    labels: Tuple[str, ...]
    centroids: np.ndarray
    feature_spec: SpectrumFeatureSpec = field(default_factory=SpectrumFeatureSpec)
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.centroids = np.atleast_2d(np.asarray(self.centroids, dtype=float))
        if self.centroids.shape[0] != len(self.labels):
            raise ValueError('one centroid per label is required')


def train_sound_classifier(features: np.ndarray, labels: Sequence[str],
                           feature_spec: SpectrumFeatureSpec = SpectrumFeatureSpec()) -> SoundClassModel:
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    classes = tuple(c for c in SOUND_CLASSES if np.any(labels == c)) + \
        tuple(sorted(set(labels.tolist()) - set(SOUND_CLASSES)))
    if len(classes) < 2:
        raise ValueError('need samples of at least two sound classes')
    centroids = np.vstack([features[labels == c].mean(axis=0) for c in classes])
    counts = {c: int(np.sum(labels == c)) for c in classes}
    logger.info(f'Sound classifier trained: {counts}')
    return SoundClassModel(classes, centroids, feature_spec, {'counts': counts})


def classify_features(features: np.ndarray, model: SoundClassModel) -> Tuple[str, float]:
    d = np.linalg.norm(model.centroids - np.asarray(features, dtype=float)[None, :], axis=1)
    order = np.argsort(d, kind='stable')
    margin = float(d[order[1]] - d[order[0]]) if d.size > 1 else float('inf')
    return model.labels[order[0]], margin


def classify_sound_source(frame: MicFrame, model: SoundClassModel) -> Tuple[str, float]:
    """Label and confidence (distance margin between the two nearest centroids)."""
    return classify_features(spectrum_features(frame, model.feature_spec), model)

"""
Gas signature identification from e-nose windows.

Features are [mox1, mox2, mox3, ndir / ndir_ref, ec / ec_ref], averaged over
the window and unit-normalised; the label is the nearest class centroid by
cosine distance. Windows whose feature norm stays under ``epsilon`` are clean.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from sensors.enose import EnoseParams, signature_reference, steady_state
from sensors.types import GasSample
from simworld.types import Species

logger = logging.getLogger(__name__)

SIGNATURE_CLASSES = ('clean', 'methane', 'co2', 'voc', 'mixed')
MIN_WINDOW = 5


@dataclass(eq=False)
class SignatureModel:
    labels: Tuple[str, ...]
    centroids: np.ndarray
    ndir_ref: float = 50.0
    ec_ref: float = 50.0
    epsilon: float = 0.02
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.centroids = np.atleast_2d(np.asarray(self.centroids, dtype=float))
        if self.centroids.shape[0] != len(self.labels):
            raise ValueError('one centroid per label is required')
        if not np.allclose(np.linalg.norm(self.centroids, axis=1), 1.0):
            raise ValueError('centroids must be unit vectors')



def signature_vector(samples: Sequence[GasSample], ndir_ref: float, ec_ref: float) -> np.ndarray:
    values = np.array([s.vector() for s in samples], dtype=float).mean(axis=0)
    values[3] /= ndir_ref
    values[4] /= ec_ref
    return values


def _class_concentrations(label: str, level: float, rng: np.random.Generator) -> Dict[Species, float]:
    if label == 'methane':
        return {Species.METHANE: level}
    if label == 'co2':
        return {Species.CO2: 10.0 * level}
    if label == 'voc':
        return {Species.VOC: level}
    mix = rng.uniform(0.3, 0.7)
    return {Species.METHANE: level * mix, Species.VOC: level * (1.0 - mix)}


def train_signature_model(params: EnoseParams = EnoseParams(), n_per_class: int = 50, seed: int = 0,
                          levels: Tuple[float, float] = (5.0, 150.0), epsilon: float = 0.02) -> SignatureModel:
    """Centroids from steady-state responses of the e-nose model over a range of concentrations."""
    rng = np.random.default_rng(seed)
    ndir_ref, ec_ref = signature_reference(params)
    labels = tuple(c for c in SIGNATURE_CLASSES if c != 'clean')
    centroids = []
    for label in labels:
        vecs = []
        for level in rng.uniform(levels[0], levels[1], n_per_class):
            r = steady_state(_class_concentrations(label, level, rng), params)
            r[3] /= ndir_ref
            r[4] /= ec_ref
            vecs.append(r / np.linalg.norm(r))
        centroids.append(np.mean(vecs, axis=0))
    centroids = np.array(centroids)
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    logger.info(f'Signature model trained on {n_per_class} responses per class ({", ".join(labels)})')
    return SignatureModel(labels, centroids, ndir_ref, ec_ref, epsilon,
                          {'n_per_class': n_per_class, 'seed': seed, 'levels': list(levels)})


def classify_vector(vector: np.ndarray, model: SignatureModel) -> Tuple[str, float]:
    norm = float(np.linalg.norm(vector))
    if norm < model.epsilon:
        return 'clean', 1.0
    distance = 1.0 - model.centroids @ (vector / norm)
    order = np.argsort(distance, kind='stable')
    margin = float(distance[order[1]] - distance[order[0]]) if distance.size > 1 else 1.0
    return model.labels[order[0]], margin


def classify_gas_signature(window: Sequence[GasSample], model: SignatureModel) -> Tuple[str, float]:
    """Label and confidence (cosine-distance margin between the two nearest centroids)."""
    if len(window) < MIN_WINDOW:
        raise ValueError(f'signature window needs at least {MIN_WINDOW} samples, got {len(window)}')
    return classify_vector(signature_vector(window, model.ndir_ref, model.ec_ref), model)

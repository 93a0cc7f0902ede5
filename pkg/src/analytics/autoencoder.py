"""
Dense autoencoder for sound anomaly detection (numpy, trained from scratch).

Layers 64-32-8-32-64, tanh on hidden layers, linear output, MSE loss,
mini-batch gradient descent with momentum. The anomaly threshold is the mean
plus three standard deviations of the training reconstruction errors, raised
to their 99th percentile when the error tail is heavier than Gaussian so that
at least 99% of the training set always scores at or below it.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.metrics import roc_auc_score

from sensors.types import MicFrame
from .features import SpectrumFeatureSpec, spectrum_features

logger = logging.getLogger(__name__)

LAYERS = (64, 32, 8, 32, 64)
MIN_SAMPLES = 100


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training (learning rate too high?)."""


@dataclass(frozen=True)
class TrainParams:
    lr: float = 1e-3
    epochs: int = 300
    batch: int = 32
    momentum: float = 0.9
    seed: int = 0
    min_samples: int = MIN_SAMPLES


@dataclass(eq=False)
class AutoencoderModel:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    feature_mean: np.ndarray
    feature_std: np.ndarray
    threshold: float = float('inf')
    sizes: Tuple[int, ...] = LAYERS
    loss_history: List[float] = field(default_factory=list)
    feature_spec: SpectrumFeatureSpec = field(default_factory=SpectrumFeatureSpec)
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError('layer count does not match sizes')
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[k], self.sizes[k + 1]) or b.shape != (self.sizes[k + 1],):
                raise ValueError(f'layer {k} has shape {w.shape}/{b.shape}, expected '
                                 f'({self.sizes[k]}, {self.sizes[k + 1]})')

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(features) - self.feature_mean) / self.feature_std

    def forward(self, x: np.ndarray) -> List[np.ndarray]:
        """Activations of every layer, input first."""
        acts = [x]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            acts.append(z if k == last else np.tanh(z))
        return acts

    def encode(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[len(self.sizes) // 2]

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[-1]

    def errors(self, features) -> np.ndarray:
        """Per-sample reconstruction MSE of raw (unstandardised) feature vectors."""
        x = self.standardize(np.asarray(features, dtype=float))
        return np.mean((self.reconstruct(x) - x) ** 2, axis=1)

    def loss_and_grads(self, x: np.ndarray) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
        """Batch MSE on standardised inputs and its gradients."""
        acts = self.forward(x)
        out = acts[-1]
        n = x.shape[0] * x.shape[1]
        loss = float(np.sum((out - x) ** 2) / n)
        delta = 2.0 * (out - x) / n
        gw, gb = [None] * len(self.weights), [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            gw[k] = acts[k].T @ delta
            gb[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (1.0 - acts[k] ** 2)
        return loss, gw, gb


def init_model(sizes: Sequence[int], seed: int, feature_mean: np.ndarray, feature_std: np.ndarray) -> AutoencoderModel:
    rng = np.random.default_rng(seed)
    weights = [rng.normal(0.0, np.sqrt(2.0 / sizes[k]), size=(sizes[k], sizes[k + 1])) for k in range(len(sizes) - 1)]
    biases = [np.zeros(sizes[k + 1]) for k in range(len(sizes) - 1)]
    return AutoencoderModel(weights, biases, feature_mean, feature_std, sizes=tuple(sizes))


def fit_threshold(errors: np.ndarray, coverage: float = 0.99) -> float:
    """max(mean + 3 std, coverage quantile) of the training errors; the quantile is an observed error."""
    errors = np.asarray(errors, dtype=float)
    gaussian = errors.mean() + 3.0 * errors.std()
    return float(max(gaussian, np.quantile(errors, coverage, method='higher')))


def train_autoencoder(samples, params: TrainParams = TrainParams(), sizes: Sequence[int] = LAYERS,
                      feature_spec: SpectrumFeatureSpec = SpectrumFeatureSpec()) -> AutoencoderModel:
    """Train on feature vectors (one per row).

    Args:
        samples: (n, 64) feature vectors of normal sounds
        params: learning rate, epochs, batch size, momentum and seed
        sizes: layer sizes, input first
        feature_spec: how the features were computed (stored with the model)

    Returns:
        trained AutoencoderModel with its threshold and per-epoch loss history
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != sizes[0]:
        raise ValueError(f'samples must be (n, {sizes[0]}), got {data.shape}')
    if data.shape[0] < params.min_samples:
        raise ValueError(f'need at least {params.min_samples} samples, got {data.shape[0]}')
    mean = data.mean(axis=0)
    std = np.maximum(data.std(axis=0), 1e-6)
    model = init_model(sizes, params.seed, mean, std)
    model.feature_spec = feature_spec
    x_all = model.standardize(data)
    rng = np.random.default_rng([params.seed, 1])
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]

    history = [model.loss_and_grads(x_all)[0]]
    for epoch in range(params.epochs):
        order = rng.permutation(x_all.shape[0])
        for start in range(0, order.size, params.batch):
            batch = x_all[order[start:start + params.batch]]
            loss, gw, gb = model.loss_and_grads(batch)
            if not np.isfinite(loss):
                raise TrainingDiverged(f'loss became {loss} at epoch {epoch}; lower the learning rate '
                                       f'(lr={params.lr})')
            for k in range(len(model.weights)):
                vel_w[k] = params.momentum * vel_w[k] - params.lr * gw[k]
                vel_b[k] = params.momentum * vel_b[k] - params.lr * gb[k]
                model.weights[k] += vel_w[k]
                model.biases[k] += vel_b[k]
        epoch_loss = model.loss_and_grads(x_all)[0]
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(f'loss became {epoch_loss} after epoch {epoch}; lower the learning rate '
                                   f'(lr={params.lr})')
        history.append(epoch_loss)
        if epoch % 50 == 0:
            logger.debug(f'autoencoder epoch {epoch}: loss {epoch_loss:.5f}')

    errors = model.errors(data)
    model.threshold = fit_threshold(errors)
    model.loss_history = history
    model.meta = {'epochs': params.epochs, 'lr': params.lr, 'batch': params.batch, 'seed': params.seed,
                  'n_samples': int(data.shape[0])}
    logger.info(f'Autoencoder trained on {data.shape[0]} samples: loss {history[0]:.4f} -> {history[-1]:.4f}, '
                f'threshold {model.threshold:.5f}')
    return model


def sound_anomaly_score(frame: MicFrame, model: AutoencoderModel) -> Tuple[float, bool]:
    """Reconstruction error of the frame's features and whether it exceeds the model threshold."""
    score = float(model.errors(spectrum_features(frame, model.feature_spec))[0])
    return score, score > model.threshold


def roc_auc(normal_scores, anomalous_scores) -> float:
    labels = np.concatenate((np.zeros(len(normal_scores)), np.ones(len(anomalous_scores))))
    return float(roc_auc_score(labels, np.concatenate((normal_scores, anomalous_scores))))

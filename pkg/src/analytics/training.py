"""
Model training pipelines behind ``train {autoencoder,flow,signature,soundclass}``.

Each pipeline synthesises its data with the same sensor models the robot
uses, so sensor settings come from the ``sensors`` config section and the
training knobs from ``train.<kind>``.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from config import Config, params_from
from sensors.enose import EnoseParams
from sensors.gascam import GasCameraParams
from sensors.microphone import MicParams
from .autoencoder import TrainParams, train_autoencoder
from .flow_rate import train_flow_model
from .gas_signature import train_signature_model
from .model_io import save_model
from .sound_class import train_sound_classifier
from .synth import flow_dataset, sound_class_dataset, sound_features

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AutoencoderTraining:
    n_samples: int = 400
    snr_db: float = 20.0
    seed: int = 0
    lr: float = 1e-3
    epochs: int = 300
    batch: int = 32
    momentum: float = 0.9


@dataclass(frozen=True)
class FlowTraining:
    n_sequences: int = 60
    rate_min: float = 20.0
    rate_max: float = 200.0
    distance: float = 2.0
    frames: int = 5
    alpha: float = 1.0
    plume_threshold: float = 5.0
    seed: int = 0


@dataclass(frozen=True)
class SignatureTraining:
    n_per_class: int = 50
    seed: int = 0
    levels: Tuple[float, float] = (5.0, 150.0)
    epsilon: float = 0.02


@dataclass(frozen=True)
class SoundClassTraining:
    n_per_class: int = 60
    seed: int = 0
    snr_db: float = 20.0


def _train_autoencoder(cfg: Config, seed: Optional[int]):
    p = params_from(AutoencoderTraining, cfg.section('train.autoencoder'))
    seed = p.seed if seed is None else seed
    mic = params_from(MicParams, cfg.section('sensors.mic'))
    features = sound_features('pump', p.n_samples, seed, p.snr_db, params=mic)
    return train_autoencoder(features, TrainParams(p.lr, p.epochs, p.batch, p.momentum, seed))


def _train_flow(cfg: Config, seed: Optional[int]):
    p = params_from(FlowTraining, cfg.section('train.flow'))
    seed = p.seed if seed is None else seed
    camera = params_from(GasCameraParams, cfg.section('sensors.gascam'))
    rates = np.random.default_rng([seed, 0x72617465]).uniform(p.rate_min, p.rate_max, p.n_sequences)
    data = flow_dataset(rates, seed, p.distance, p.frames, camera)
    return train_flow_model([seq for seq, _ in data], [rate for _, rate in data], p.alpha, p.plume_threshold)


def _train_signature(cfg: Config, seed: Optional[int]):
    p = params_from(SignatureTraining, cfg.section('train.signature'))
    enose = params_from(EnoseParams, cfg.section('sensors.enose'))
    return train_signature_model(enose, p.n_per_class, p.seed if seed is None else seed, p.levels, p.epsilon)


def _train_soundclass(cfg: Config, seed: Optional[int]):
    p = params_from(SoundClassTraining, cfg.section('train.soundclass'))
    features, labels = sound_class_dataset(p.n_per_class, p.seed if seed is None else seed, p.snr_db)
    return train_sound_classifier(features, labels)


TRAINERS: Dict[str, Callable[[Config, Optional[int]], Any]] = {
    'autoencoder': _train_autoencoder,
    'flow': _train_flow,
    'signature': _train_signature,
    'soundclass': _train_soundclass,
}


def train_model(kind: str, cfg: Config, out_dir, seed: Optional[int] = None) -> Path:
    """Train one model kind and write ``<out_dir>/<kind>.psm``.

    Args:
        kind: one of autoencoder, flow, signature, soundclass
        cfg: configuration (``train.<kind>`` and the matching sensor sections)
        out_dir: model directory
        seed: overrides ``train.<kind>.seed``

    Returns:
        path of the written model file
    """
    if kind not in TRAINERS:
        raise ValueError(f'unknown model kind {kind!r} (known: {", ".join(TRAINERS)})')
    model = TRAINERS[kind](cfg, seed)
    path = save_model(model, Path(out_dir) / f'{kind}.psm')
    logger.info(f'{kind} model written to {path}')
    return path

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).parent.parent
for p in (ROOT / 'src', ROOT):
    if str(p) not in sys.path:
        sys.path.insert(0, str(p))

from config import Config, load_config  # noqa: E402
from simworld.types import LOGODDS_CLAMP, OccupancyGrid, Pose2D, WorldParams  # noqa: E402

SCENARIO_PATH = ROOT / 'scenarios' / 'wastewater.yaml'
PLAN_PATH = ROOT / 'scenarios' / 'wastewater_round.yaml'

# small training runs; enough for the closed-loop tests
FAST_TRAIN = {
    'autoencoder': {'n_samples': 150, 'epochs': 120, 'seed': 0},
    'flow': {'n_sequences': 30, 'seed': 0},
    'signature': {'n_per_class': 30, 'seed': 0},
    'soundclass': {'n_per_class': 20, 'seed': 0},
}


def free_grid(width=40, height=40, resolution=0.1, origin=(0.0, 0.0)) -> OccupancyGrid:
    return OccupancyGrid.empty(width, height, resolution, Pose2D(*origin), logodds=-LOGODDS_CLAMP)


def box_grid(width=40, height=40, resolution=0.1, wall=1) -> OccupancyGrid:
    """Free room with an occupied border ``wall`` cells thick."""
    grid = free_grid(width, height, resolution)
    grid.logodds[:wall, :] = LOGODDS_CLAMP
    grid.logodds[-wall:, :] = LOGODDS_CLAMP
    grid.logodds[:, :wall] = LOGODDS_CLAMP
    grid.logodds[:, -wall:] = LOGODDS_CLAMP
    return grid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def default_config() -> Config:
    return load_config(env={})


@pytest.fixture(scope='session')
def fast_config(default_config) -> Config:
    """Default config with short training runs and no wall-clock-heavy waits."""
    return default_config.merged({'train': FAST_TRAIN, 'runner': {'response_timeout': 10.0}})


@pytest.fixture(scope='session')
def wastewater(default_config):
    from agents.robot_agent import world_params
    from simworld.scenario import load_scenario
    return load_scenario(SCENARIO_PATH, params=world_params(default_config))


@pytest.fixture(scope='session')
def wastewater_plan():
    from agents.mission_plan import load_plan
    return load_plan(PLAN_PATH)


@pytest.fixture(scope='session')
def models_dir(tmp_path_factory, fast_config) -> Path:
    """All four analytics models, trained once per test session."""
    from analytics.training import TRAINERS, train_model
    out = tmp_path_factory.mktemp('models')
    for kind in TRAINERS:
        train_model(kind, fast_config, out)
    return out


@pytest.fixture(scope='session')
def models(models_dir):
    from agents.server_agent import load_models
    return load_models(models_dir)


@pytest.fixture
def world_params_still() -> WorldParams:
    """No wind meander or gusts, so plume fields stay fixed in time."""
    return WorldParams(wind_meander_amplitude=0.0, gust_amplitude=0.0)

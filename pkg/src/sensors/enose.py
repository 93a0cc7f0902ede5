"""
Electronic nose: three non-selective MOX channels, an NDIR CO2 channel and an
electrochemical channel, each a first-order lag on its steady-state response.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from simworld.plume import DispersionParams, total_concentration
from simworld.types import Pose2D, Species, WorldState
from utils.guards import check_positive
from utils.rng import derive_rng
from .types import GasSample

DEFAULT_SENSITIVITY: Dict[str, Dict[str, float]] = {
    'mox1': {'methane': 1.0, 'co2': 0.05, 'voc': 0.6},
    'mox2': {'methane': 0.4, 'co2': 0.02, 'voc': 1.0},
    'mox3': {'methane': 0.7, 'co2': 0.3, 'voc': 0.3},
}


@dataclass(frozen=True)
class EnoseParams:
    sensitivity: Dict[str, Dict[str, float]] = field(default_factory=lambda: dict(DEFAULT_SENSITIVITY))
    tau: Tuple[float, float, float] = (5.0, 8.0, 12.0)
    tau_fast: float = 1.0
    c_ref: float = 50.0
    ec_species: str = 'voc'
    inlet_height: float = 0.0
    mox_noise: float = 0.002
    ndir_noise: float = 0.5
    ec_noise: float = 0.05

    def matrix(self) -> np.ndarray:
        """(3, n_species) cross-sensitivity matrix, species in Species order."""
        return np.array([[self.sensitivity[ch].get(sp.value, 0.0) for sp in Species]
                         for ch in ('mox1', 'mox2', 'mox3')])


def concentrations_at(world: WorldState, x: float, y: float, z: float = 0.0,
                      dispersion: DispersionParams = DispersionParams()) -> Dict[Species, float]:
    return {sp: float(total_concentration(world.plumes, x, y, sp, z, dispersion)) for sp in Species}


def steady_state(conc: Dict[Species, float], params: EnoseParams) -> np.ndarray:
    """Noise-free equilibrium [mox1, mox2, mox3, ndir ppm, ec ppm]."""
    c = np.array([conc.get(sp, 0.0) for sp in Species])
    mox = np.clip(params.matrix() @ c / params.c_ref, 0.0, 1.0)
    return np.array([*mox, conc.get(Species.CO2, 0.0), conc.get(Species(params.ec_species), 0.0)])


def enose_sample(world: WorldState, pose: Pose2D, prev: Optional[GasSample], dt: float,
                 params: EnoseParams = EnoseParams(),
                 dispersion: DispersionParams = DispersionParams()) -> GasSample:
    """Advance the e-nose by dt and read it.

    The lag uses the exact discretisation r += (1 - exp(-dt/tau)) * (r_ss - r),
    so a constant input reaches r_ss * (1 - exp(-t/tau)) for any step size.
    NDIR reports the excess over ambient CO2.
    """
    check_positive(dt, 'dt')
    target = steady_state(concentrations_at(world, pose.x, pose.y, params.inlet_height, dispersion), params)
    state = np.zeros(5) if prev is None else np.asarray(prev.lag_state, dtype=float)
    taus = np.array([*params.tau, params.tau_fast, params.tau_fast])
    state = state + (1.0 - np.exp(-dt / taus)) * (target - state)

    rng = derive_rng(world.rng_seed, 'enose', world.tick)
    noise = rng.normal(0.0, 1.0, size=5) * np.array([params.mox_noise] * 3 + [params.ndir_noise, params.ec_noise])
    reading = state + noise
    mox = np.clip(reading[:3], 0.0, 1.0)
    return GasSample(stamp=world.time, mox=tuple(float(v) for v in mox),
                     ndir_co2=max(float(reading[3]), 0.0), electrochemical=max(float(reading[4]), 0.0),
                     humidity=world.params.humidity, wind=tuple(world.wind),
                     lag_state=tuple(float(v) for v in state))


def signature_reference(params: EnoseParams) -> Tuple[float, float]:
    """Scale references for the NDIR and electrochemical channels in signature vectors."""
    return params.c_ref, params.c_ref


def lag_fraction(t: float, tau: float) -> float:
    return 1.0 - math.exp(-t / tau)

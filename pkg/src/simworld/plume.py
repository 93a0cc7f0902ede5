"""
Gaussian plume dispersion for leak sources.

Single stability class with power-law spreads sigma_y = sigma_z = a * d**b,
ground reflection for elevated sources, concentrations in mass ppm relative to
standard air.
"""
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .types import GasPlume, Species

AIR_DENSITY = 1.204  # kg/m^3 at 20 C
SPECIES_DENSITY = {
    Species.METHANE: 0.668,
    Species.CO2: 1.842,
    Species.VOC: 2.5,
}

SpeciesFilter = Optional[Union[Species, str, Iterable[Union[Species, str]]]]


@dataclass(frozen=True)
class DispersionParams:
    sigma_a: float = 0.08
    sigma_b: float = 0.9
    u_min: float = 0.1
    d_min: float = 0.05


def mass_rate(plume: GasPlume) -> float:
    """Emission rate in kg/s (mL/min of pure gas at its density)."""
    return plume.emission_rate * 1e-6 / 60.0 * SPECIES_DENSITY[plume.species]


def _accepts(plume: GasPlume, species_filter: SpeciesFilter) -> bool:
    if species_filter is None:
        return True
    if isinstance(species_filter, (Species, str)):
        return plume.species is Species(species_filter)
    return plume.species in {Species(s) for s in species_filter}


def plume_field(plume: GasPlume, xs, ys, z=0.0, params: DispersionParams = DispersionParams()) -> np.ndarray:
    """Vectorized concentration (ppm) at points (xs, ys, z)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    z = np.asarray(z, dtype=float)
    speed, direction = plume.wind
    u = max(speed, params.u_min)
    ex, ey = math.cos(direction), math.sin(direction)
    rx, ry = xs - plume.source[0], ys - plume.source[1]
    d = rx * ex + ry * ey
    c = -rx * ey + ry * ex
    sigma = params.sigma_a * np.maximum(d, params.d_min) ** params.sigma_b
    h = plume.height
    vertical = np.exp(-(z - h) ** 2 / (2.0 * sigma ** 2)) + np.exp(-(z + h) ** 2 / (2.0 * sigma ** 2))
    kg_m3 = mass_rate(plume) / (2.0 * math.pi * u * sigma * sigma) * np.exp(-c * c / (2.0 * sigma ** 2)) * vertical
    ppm = kg_m3 / AIR_DENSITY * 1e6
    return np.where(d > 0.0, ppm, 0.0)


def plume_concentration(plume: GasPlume, point, species_filter: SpeciesFilter = None, z: float = 0.0,
                        params: DispersionParams = DispersionParams()) -> float:
    """Concentration (ppm) of one plume at a point; 0 upwind or when filtered out."""
    x, y = float(point[0]), float(point[1])
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        raise ValueError(f'point must be finite, got {point!r}')
    if not _accepts(plume, species_filter):
        return 0.0
    return float(plume_field(plume, x, y, z, params))


def total_concentration(plumes: Iterable[GasPlume], xs, ys, species: SpeciesFilter = None, z=0.0,
                        params: DispersionParams = DispersionParams()) -> np.ndarray:
    """Sum over plumes (optionally one species) at many points."""
    out = np.zeros(np.broadcast(np.asarray(xs), np.asarray(ys)).shape)
    for plume in plumes:
        if _accepts(plume, species):
            out = out + plume_field(plume, xs, ys, z, params)
    return out

"""
Inspection routes: waypoints plus the checks to run at some of them.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from config import ConfigError, read_yaml
from simworld.types import Pose2D

logger = logging.getLogger(__name__)

CHECKS = ('gas_leak', 'gas_signature', 'doa', 'sound_anomaly', 'oil', 'channel', 'map_diff')

# sim seconds of stationary capture each check needs
MIN_DWELL = {
    'gas_leak': 1.0,
    'gas_signature': 5.0,
    'doa': 0.25,
    'sound_anomaly': 0.25,
    'oil': 0.1,
    'channel': 0.1,
    'map_diff': 0.1,
}


@dataclass(frozen=True)
class Checkpoint:
    waypoint: int
    checks: Tuple[str, ...]
    dwell: float
    label: str = ''

    def required_dwell(self) -> float:
        return max((MIN_DWELL[c] for c in self.checks), default=0.0)


@dataclass(frozen=True)
class MissionPlan:
    waypoints: Tuple[Pose2D, ...]
    checkpoints: Tuple[Checkpoint, ...] = ()
    name: str = 'mission'

    def __post_init__(self):
        if not self.waypoints:
            raise ConfigError('mission plan needs at least one waypoint')
        for i, cp in enumerate(self.checkpoints):
            if not 0 <= cp.waypoint < len(self.waypoints):
                raise ConfigError(f'checkpoint {i} refers to waypoint {cp.waypoint}, '
                                  f'plan has {len(self.waypoints)}')
            unknown = [c for c in cp.checks if c not in CHECKS]
            if unknown:
                raise ConfigError(f'checkpoint {i}: unknown checks {unknown} (known: {", ".join(CHECKS)})')
            if len(set(cp.checks)) != len(cp.checks):
                raise ConfigError(f'checkpoint {i}: duplicate checks')
            if not math.isfinite(cp.dwell) or cp.dwell < cp.required_dwell():
                raise ConfigError(f'checkpoint {i}: dwell {cp.dwell} s is shorter than the '
                                  f'{cp.required_dwell()} s its checks need')

    def checkpoints_at(self, waypoint: int) -> List[Tuple[int, Checkpoint]]:
        return [(i, cp) for i, cp in enumerate(self.checkpoints) if cp.waypoint == waypoint]

    def planned_checks(self) -> List[Tuple[int, str]]:
        return [(i, c) for i, cp in enumerate(self.checkpoints) for c in cp.checks]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'waypoints': [list(p.as_tuple()) for p in self.waypoints],
            'checkpoints': [{'waypoint': cp.waypoint, 'checks': list(cp.checks), 'dwell': cp.dwell,
                             'label': cp.label} for cp in self.checkpoints],
        }


def plan_from_dict(data: Dict[str, Any], name: Optional[str] = None) -> MissionPlan:
    """Build a plan from its YAML form.

    Waypoints are ``[x, y, theta]`` lists (theta defaults to 0). Checkpoints
    are mappings with ``waypoint``, ``checks``, ``dwell`` and an optional
    ``label``.
    """
    try:
        waypoints = tuple(Pose2D(*[float(v) for v in wp]) for wp in data.get('waypoints', []) or [])
        checkpoints = tuple(Checkpoint(int(cp['waypoint']), tuple(cp.get('checks', []) or []),
                                       float(cp.get('dwell', 0.0)), str(cp.get('label', '')))
                            for cp in data.get('checkpoints', []) or [])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f'invalid mission plan: {e}') from e
    return MissionPlan(waypoints, checkpoints, str(data.get('name', name or 'mission')))


def load_plan(path) -> MissionPlan:
    path = Path(path)
    plan = plan_from_dict(read_yaml(path), name=path.stem)
    logger.info(f'Plan {plan.name}: {len(plan.waypoints)} waypoints, {len(plan.checkpoints)} checkpoints, '
                f'{len(plan.planned_checks())} checks')
    return plan

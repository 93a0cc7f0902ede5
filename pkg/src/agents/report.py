"""
Mission reports.

``build_report`` is the only way a report is made: the live runner and the
replay tool both hand it the robot-side checkpoint records and the analytics
results, so equal inputs give equal reports.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .mission_plan import MissionPlan

logger = logging.getLogger(__name__)

FINDING = 'finding'
CLEAR = 'clear'
SKIPPED = 'skipped'

# checks whose findings are plant anomalies; doa bearings and channel hazards are not
ANOMALY_CHECKS = ('gas_leak', 'gas_signature', 'sound_anomaly', 'oil', 'map_diff')

ResultKey = Tuple[int, str]


@dataclass
class CheckOutcome:
    checkpoint: int
    check: str
    status: str
    anomalous: bool = False
    reason: str = ''
    attempts: int = 0
    values: Dict[str, Any] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)


@dataclass
class CheckpointReport:
    index: int
    waypoint: int
    label: str
    pose: Optional[List[float]]
    t_start: Optional[float]
    t_end: Optional[float]
    outcomes: List[CheckOutcome] = field(default_factory=list)


@dataclass
class MissionReport:
    name: str
    scenario: str
    variant: Optional[str]
    seed: int
    digest: str
    complete: bool
    incomplete_reason: str
    checkpoints: List[CheckpointReport] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    def outcomes(self) -> List[CheckOutcome]:
        return [o for cp in self.checkpoints for o in cp.outcomes]

    def anomalies(self) -> List[CheckOutcome]:
        return [o for o in self.outcomes() if o.anomalous]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'MissionReport':
        checkpoints = [CheckpointReport(**{**cp, 'outcomes': [CheckOutcome(**o) for o in cp['outcomes']]})
                       for cp in data.get('checkpoints', [])]
        return cls(**{**data, 'checkpoints': checkpoints})


def outcome_from_result(checkpoint: int, check: str, result: Optional[Mapping[str, Any]], attempts: int,
                        reason: str = '') -> CheckOutcome:
    """Classify one analytics answer; no answer means skipped with ``reason``."""
    if result is None:
        return CheckOutcome(checkpoint, check, SKIPPED, reason=reason or 'no analytics response', attempts=attempts)
    values = dict(result.get('values', {}))
    details = dict(result.get('details', {}))
    if not result.get('ok', False):
        return CheckOutcome(checkpoint, check, SKIPPED, reason=str(result.get('error', 'analysis failed')),
                            attempts=attempts, values=values, details=details)
    anomalous = bool(result.get('anomalous', False)) and check in ANOMALY_CHECKS
    status = FINDING if anomalous or result.get('finding', False) else CLEAR
    return CheckOutcome(checkpoint, check, status, anomalous, '', attempts, values, details)


def build_report(plan: MissionPlan, records: List[Mapping[str, Any]], results: Mapping[ResultKey, Mapping[str, Any]],
                 route: Mapping[str, Any], scenario: str = '', variant: Optional[str] = None, seed: int = 0,
                 digest: str = '') -> MissionReport:
    """Assemble the report.

    Args:
        plan: the executed plan
        records: robot checkpoint records (one per checkpoint the robot handled)
        results: analytics answers keyed by (checkpoint, check)
        route: robot route statistics (``complete``, ``reason``, ``waypoints_reached``, ``distance_m``, ``sim_time``)
        scenario, variant, seed, digest: identification of the run

    Returns:
        MissionReport with exactly one outcome per planned check
    """
    by_index = {int(r['checkpoint']): r for r in records}
    checkpoints = []
    for i, cp in enumerate(plan.checkpoints):
        record = by_index.get(i)
        if record is None:
            reason = 'checkpoint not reached'
            if route.get('reason'):
                reason += f' ({route["reason"]})'
            outcomes = [CheckOutcome(i, c, SKIPPED, reason=reason) for c in cp.checks]
            checkpoints.append(CheckpointReport(i, cp.waypoint, cp.label, None, None, None, outcomes))
            continue
        outcomes = []
        for check in cp.checks:
            info = record.get('checks', {}).get(check, {})
            attempts = int(info.get('attempts', 0))
            if record.get('skipped'):
                outcomes.append(CheckOutcome(i, check, SKIPPED, reason=str(record['skipped']), attempts=attempts))
                continue
            outcomes.append(outcome_from_result(i, check, results.get((i, check)), attempts, info.get('reason', '')))
        checkpoints.append(CheckpointReport(i, cp.waypoint, cp.label, record.get('pose'), record.get('t_start'),
                                            record.get('t_end'), outcomes))

    all_outcomes = [o for c in checkpoints for o in c.outcomes]
    total_wp = len(plan.waypoints)
    summary = {
        'checks_planned': len(all_outcomes),
        'checks_executed': sum(o.status != SKIPPED for o in all_outcomes),
        'findings': sum(o.status == FINDING for o in all_outcomes),
        'clear': sum(o.status == CLEAR for o in all_outcomes),
        'skipped': sum(o.status == SKIPPED for o in all_outcomes),
        'anomaly_count': sum(o.anomalous for o in all_outcomes),
        'waypoints_reached': int(route.get('waypoints_reached', 0)),
        'waypoints_total': total_wp,
        'route_completion': int(route.get('waypoints_reached', 0)) / total_wp,
        'distance_m': float(route.get('distance_m', 0.0)),
        'sim_time': float(route.get('sim_time', 0.0)),
        'safety_stops': int(route.get('safety_stops', 0)),
        'localization_flags': int(route.get('localization_flags', 0)),
    }
    complete = bool(route.get('complete', False))
    report = MissionReport(plan.name, scenario, variant, int(seed), digest, complete,
                           '' if complete else str(route.get('reason', 'incomplete')), checkpoints, summary)
    logger.info(f'Report {plan.name}: {summary["checks_executed"]}/{summary["checks_planned"]} checks executed, '
                f'{summary["anomaly_count"]} anomalies, route {summary["route_completion"]:.0%}'
                f'{"" if complete else " (INCOMPLETE: " + report.incomplete_reason + ")"}')
    return report

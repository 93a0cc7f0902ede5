"""
Rebuild a mission report from a recorded log.

The analytics run again on the recorded data payloads, so a log replayed with
the same model files gives the live report, and a log replayed with a
retrained model shows what that model would have reported.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple

from config import Config
from msgbus import LogFormatError, read_log
from msgbus.payloads import decode_json, encode_json, unpack_payload
from simworld.scenario import Scenario
from .checkpoint_evaluator import DATA_TOPIC, request_key
from .mission_plan import plan_from_dict
from .report import MissionReport, build_report
from .server_agent import build_service, load_models

logger = logging.getLogger(__name__)


def _partial_route(records: List[Dict[str, Any]], reason: str) -> Dict[str, Any]:
    reached = {r['waypoint'] for r in records if not r.get('skipped')}
    t_end = max((r['t_end'] for r in records if r.get('t_end') is not None), default=0.0)
    return {'complete': False, 'reason': reason, 'waypoints_reached': len(reached), 'distance_m': 0.0,
            'sim_time': t_end, 'safety_stops': 0, 'localization_flags': 0}


def replay(log_path, cfg: Config, scenario: Scenario, models_dir=None) -> MissionReport:
    """Re-run the analytics over a mission log and build the report.

    Args:
        log_path: mission log written by ``run_mission``
        cfg: configuration for the analytics service
        scenario: the scenario the log was recorded in (reference map for channel and map checks)
        models_dir: model files to analyse with (``runner.models_dir`` by default)

    Returns:
        MissionReport, flagged incomplete when the log ends before the robot's final report
    """
    contents = read_log(log_path)
    if contents.scenario_digest != scenario.digest:
        logger.warning(f'{log_path} was recorded with scenario digest {contents.scenario_digest[:12]}, '
                       f'the supplied scenario has {scenario.digest[:12]}; replaying anyway')

    data: Dict[str, bytes] = {}
    plan_msg = report_msg = None
    status_records: Dict[int, Dict[str, Any]] = {}
    data_topics = set(DATA_TOPIC.values())
    for env in contents.envelopes:
        try:
            if env.topic in data_topics:
                key = unpack_payload(env.payload)[0].get('request')
                if key:
                    data[key] = env.payload
            elif env.topic == 'mission/status':
                msg = decode_json(env.payload)
                if msg.get('type') == 'plan' and plan_msg is None:
                    plan_msg = msg
                elif msg.get('type') == 'checkpoint':
                    status_records[int(msg['record']['checkpoint'])] = msg['record']
            elif env.topic == 'mission/report':
                report_msg = decode_json(env.payload)
        except Exception as e:
            logger.warning(f'Skipping unreadable {env.topic} message: {e}')
    if plan_msg is None:
        raise LogFormatError(f'{log_path}: no mission plan recorded')

    plan = plan_from_dict(plan_msg['plan'])
    if report_msg is not None:
        records, route = report_msg['records'], report_msg['route']
    else:
        records = [status_records[k] for k in sorted(status_records)]
        reason = 'log truncated before the mission report' if contents.truncated else 'no mission report in log'
        logger.warning(f'{log_path}: {reason}; building a partial report from {len(records)} checkpoint records')
        route = _partial_route(records, reason)

    models_dir = models_dir or cfg.get('runner.models_dir', 'models')
    service = build_service(cfg, load_models(models_dir), scenario.reference_grid, scenario.sensors)
    results: Dict[Tuple[int, str], Dict[str, Any]] = {}
    for record in records:
        cp = int(record['checkpoint'])
        for check, info in record.get('checks', {}).items():
            if not info.get('answered'):
                continue
            payload = data.get(request_key(cp, check))
            if payload is None:
                logger.warning(f'No recorded data for checkpoint {cp} {check}; outcome will be skipped')
                continue
            result = service.analyze(check, payload, attempt=int(info.get('attempts', 1)))
            results[(cp, check)] = decode_json(encode_json(result))
    logger.info(f'Replayed {Path(log_path).name}: {len(contents.envelopes)} frames, {len(results)} analyses')
    return build_report(plan, records, results, route, plan_msg.get('scenario', scenario.name),
                        plan_msg.get('variant'), int(plan_msg.get('seed', contents.seed)),
                        plan_msg.get('digest', contents.scenario_digest))

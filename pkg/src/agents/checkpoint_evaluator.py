"""
Checkpoint evaluation: stationary captures, then analysis requests over the bus.

The robot captures the data each check needs while it dwells, publishes it on
the check's data topic tagged with (checkpoint, check), and asks for the
analysis on ``mission/cmd``. The server answers on the check's result topic.
Unanswered checks are sent again, data included, up to ``retries`` times and
then recorded as skipped.
"""
import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from msgbus import BusClient
from msgbus.payloads import decode_json, encode_json
from .mission_plan import CHECKS

logger = logging.getLogger(__name__)

DATA_TOPIC = {
    'gas_leak': 'sensors/gascam',
    'gas_signature': 'sensors/enose',
    'doa': 'sensors/mic',
    'sound_anomaly': 'sensors/mic',
    'oil': 'sensors/uv',
    'channel': 'sensors/lidar',
    'map_diff': 'nav/map',
}
RESULT_TOPIC = {
    'gas_leak': 'analytics/leak',
    'gas_signature': 'analytics/signature',
    'doa': 'analytics/doa',
    'sound_anomaly': 'analytics/anomaly',
    'oil': 'analytics/oil',
    'channel': 'analytics/channel',
    'map_diff': 'analytics/mapdiff',
}
CMD_TOPIC = 'mission/cmd'
GAS_FRAMES = 5
GAS_PERIOD = 0.2
SIGNATURE_SAMPLES = 5


def request_key(checkpoint: int, check: str) -> str:
    return f'{checkpoint}:{check}'


def request_tag(checkpoint: int, check: str) -> Dict[str, object]:
    return {'checkpoint': checkpoint, 'check': check, 'request': request_key(checkpoint, check)}


class CheckpointSensors(ABC):
    """What the evaluator needs from the robot while it stands still."""

    @property
    @abstractmethod
    def now(self) -> float:
        ...

    @abstractmethod
    def wait(self, seconds: float) -> None:
        """Let sim time pass without moving (background sampling continues)."""

    @abstractmethod
    def begin_window(self) -> None:
        """Start collecting e-nose samples for this checkpoint."""

    @abstractmethod
    def mic_frame(self, tag: Mapping) -> bytes:
        ...

    @abstractmethod
    def uv_pair(self, tag: Mapping) -> bytes:
        ...

    @abstractmethod
    def tilted_scan(self, tag: Mapping) -> bytes:
        ...

    @abstractmethod
    def map_snapshot(self, tag: Mapping) -> bytes:
        ...

    @abstractmethod
    def gascam_sequence(self, frames: int, period: float, tag: Mapping) -> bytes:
        """Stationary gas-camera capture of ``frames`` triples, ``period`` s apart."""

    @abstractmethod
    def enose_window(self, samples: int, tag: Mapping) -> bytes:
        """The last ``samples`` e-nose readings taken since ``begin_window``."""


@dataclass
class CheckResult:
    result: Optional[Dict] = None
    attempts: int = 0
    reason: str = ''


@dataclass
class Request:
    checkpoint: int
    check: str
    topic: str
    payload: bytes
    extra: Dict = field(default_factory=dict)


class AnalyticsLink(ABC):

    @abstractmethod
    def request(self, requests: Sequence[Request]) -> Dict[str, CheckResult]:
        ...


class BusAnalyticsLink(AnalyticsLink):
    """Request/response over the bus with per-attempt timeouts (wall clock)."""

    def __init__(self, client: BusClient, timeout: float = 5.0, retries: int = 3, stamp_ns=None):
        self.client = client
        self.timeout = timeout
        self.retries = retries
        self.stamp_ns = stamp_ns
        self.result_topics = set(RESULT_TOPIC.values())

    def _send(self, req: Request, attempt: int) -> None:
        ts = self.stamp_ns() if self.stamp_ns else None
        self.client.publish(req.topic, req.payload, timestamp_ns=ts)
        cmd = {'type': 'analyze', **request_tag(req.checkpoint, req.check), 'attempt': attempt, **req.extra}
        self.client.publish(CMD_TOPIC, encode_json(cmd), timestamp_ns=ts)

    def request(self, requests: Sequence[Request]) -> Dict[str, CheckResult]:
        out = {r.check: CheckResult() for r in requests}
        waiting = {r.check: r for r in requests}
        for attempt in range(1, self.retries + 2):
            for check, req in waiting.items():
                out[check].attempts = attempt
                self._send(req, attempt)
            deadline = time.monotonic() + self.timeout
            while waiting:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                env = self.client.receive(timeout=remaining)
                if env is None or env.topic not in self.result_topics:
                    continue
                try:
                    meta = decode_json(env.payload)
                except Exception as e:
                    logger.warning(f'undecodable analytics result on {env.topic}: {e}')
                    continue
                check = meta.get('check')
                if check in waiting and meta.get('checkpoint') == waiting[check].checkpoint:
                    out[check].result = meta
                    del waiting[check]
            if not waiting:
                break
            if attempt <= self.retries:
                logger.warning(f'no analytics answer for {sorted(waiting)} (attempt {attempt}); retrying')
        for check in waiting:
            out[check].reason = f'no analytics response after {out[check].attempts} attempts'
            logger.warning(f'check {check} skipped: {out[check].reason}')
        return out


class LocalAnalyticsLink(AnalyticsLink):
    """Calls an analytics service in-process; results pass through the wire codec like bus answers."""

    def __init__(self, service):
        self.service = service

    def request(self, requests: Sequence[Request]) -> Dict[str, CheckResult]:
        out = {}
        for req in requests:
            result = self.service.analyze(req.check, req.payload, attempt=1)
            out[req.check] = CheckResult(decode_json(encode_json(result)), 1)
        return out


def _ordered(checks: Sequence[str]) -> List[str]:
    return [c for c in CHECKS if c in checks]


def evaluate_checkpoint(checkpoint: int, checks: Sequence[str], sensors: CheckpointSensors, link: AnalyticsLink,
                        dwell: float) -> Tuple[Dict[str, CheckResult], float, float]:
    """Run the captures of ``checks`` during a ``dwell`` s stop, then have them analysed.

    Instantaneous captures (microphones, UV pair, tilted scan, map snapshot)
    are taken on arrival, the gas camera runs its 5 Hz sequence next, and the
    e-nose window is read at the end of the dwell.

    Returns:
        (results by check, sim time at arrival, sim time at departure)
    """
    t_start = sensors.now
    sensors.begin_window()
    requests = []
    for check in _ordered(checks):
        tag = request_tag(checkpoint, check)
        if check in ('doa', 'sound_anomaly'):
            payload = sensors.mic_frame(tag)
        elif check == 'oil':
            payload = sensors.uv_pair(tag)
        elif check == 'channel':
            payload = sensors.tilted_scan(tag)
        elif check == 'map_diff':
            payload = sensors.map_snapshot(tag)
        else:
            continue
        requests.append(Request(checkpoint, check, DATA_TOPIC[check], payload))
    if 'gas_leak' in checks:
        payload = sensors.gascam_sequence(GAS_FRAMES, GAS_PERIOD, request_tag(checkpoint, 'gas_leak'))
        requests.append(Request(checkpoint, 'gas_leak', DATA_TOPIC['gas_leak'], payload))
    remaining = dwell - (sensors.now - t_start)
    if remaining > 1e-9:
        sensors.wait(remaining)
    if 'gas_signature' in checks:
        payload = sensors.enose_window(SIGNATURE_SAMPLES, request_tag(checkpoint, 'gas_signature'))
        requests.append(Request(checkpoint, 'gas_signature', DATA_TOPIC['gas_signature'], payload))
    t_end = sensors.now

    logger.info(f'Checkpoint {checkpoint}: captured {", ".join(r.check for r in requests)} '
                f'over {t_end - t_start:.1f} s; requesting analysis')
    results = link.request(requests)
    return results, t_start, t_end

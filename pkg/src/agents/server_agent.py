"""
Server side of the inspection: runs the analytics on data the robot sends.

``AnalyticsService.analyze`` is a pure function of (check, payload, models);
the live ``ServerAgent`` and the replay tool both call it, which is what makes
a replayed report equal to the live one.
"""
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np
from scipy import ndimage

from analytics import (DoaParams, classify_gas_signature, classify_sound_source, concentration_length, detect_oil,
                       diff_maps, doa_estimate, estimate_flow_rate, load_model, sound_anomaly_score)
from analytics.model_io import KINDS, ModelFileError
from config import Config, deep_merge, params_from
from msgbus import BusClient, Envelope
from msgbus.payloads import (decode_frame_pair, decode_frame_triples, decode_gas_samples, decode_grid, decode_json,
                             decode_mic_frame, decode_scan, encode_json, pose_from, unpack_payload)
from nav.channels import detect_channels, hazard_points
from sensors.lidar import TiltedScannerParams, expected_ground_profile
from simworld.types import OccupancyGrid
from utils.guards import wrap_angle
from .checkpoint_evaluator import CMD_TOPIC, DATA_TOPIC, RESULT_TOPIC
from .mission_plan import CHECKS

logger = logging.getLogger(__name__)

# model each check cannot run without
REQUIRED_MODEL = {'gas_leak': 'flow', 'gas_signature': 'signature', 'sound_anomaly': 'autoencoder'}


@dataclass(frozen=True)
class AnalyticsParams:
    leak_threshold: float = 10.0
    dark_floor: float = 1.0
    oil_min_area_px: int = 4
    oil_k: float = 4.0
    oil_min_contrast: float = 0.05
    min_blob_cells: int = 6
    boundary_margin_cells: int = 2
    agent_margin: float = 0.5
    channel_threshold: float = 0.3


def load_models(models_dir) -> Dict[str, Any]:
    """Load ``<kind>.psm`` files from a directory; missing kinds are left out."""
    models = {}
    models_dir = Path(models_dir) if models_dir else None
    for kind in KINDS:
        path = models_dir / f'{kind}.psm' if models_dir else None
        if path is None or not path.exists():
            logger.warning(f'No {kind} model at {path}; checks needing it will be skipped')
            continue
        try:
            models[kind] = load_model(path, kind)
        except ModelFileError as e:
            logger.warning(f'Could not load {kind} model: {e}')
    return models


def ignore_mask(reference: OccupancyGrid, margin_cells: int, agents=()) -> np.ndarray:
    """Cells near reference-map edges and near tracked agents, where map differences are not trusted."""
    occ = reference.occupied_mask()
    mask = np.zeros(reference.shape, dtype=bool)
    if margin_cells > 0:
        mask = ndimage.binary_dilation(occ, iterations=margin_cells) & \
            ~ndimage.binary_erosion(occ, iterations=margin_cells, border_value=1)
    if len(agents):
        xs, ys = reference.cell_centers()
        for x, y, r in agents:
            mask |= np.hypot(xs - x, ys - y) <= r
    return mask


class AnalyticsService:
    """Runs one check's analysis on its data payload.

    Results are plain dicts with ``ok``, ``error``, ``anomalous``,
    ``finding``, ``values`` (the numbers the report shows) and ``details``
    (arrays for plots). Failures never raise: they come back with
    ``ok=False`` and the error text.
    """

    def __init__(self, models: Mapping[str, Any], reference_grid: Optional[OccupancyGrid] = None,
                 params: AnalyticsParams = AnalyticsParams(), doa_params: DoaParams = DoaParams(),
                 tilted_params: TiltedScannerParams = TiltedScannerParams()):
        self.models = dict(models)
        self.reference_grid = reference_grid
        self.params = params
        self.doa_params = doa_params
        self.tilted_params = tilted_params
        self.ground_profile = expected_ground_profile(tilted_params)

    def analyze(self, check: str, payload: bytes, attempt: int = 1) -> Dict[str, Any]:
        result = {'check': check, 'attempt': int(attempt), 'ok': False, 'error': '', 'anomalous': False,
                  'finding': False, 'values': {}, 'details': {}}
        try:
            meta = unpack_payload(payload)[0]
            result['checkpoint'] = meta.get('checkpoint')
            result['request'] = meta.get('request')
            if check not in CHECKS:
                raise ValueError(f'unknown check {check!r}')
            kind = REQUIRED_MODEL.get(check)
            if kind and kind not in self.models:
                raise LookupError(f'model not available: {kind}')
            anomalous, finding, values, details = getattr(self, f'_{check}')(payload)
            result.update(ok=True, anomalous=bool(anomalous), finding=bool(finding or anomalous),
                          values=values, details=details)
        except Exception as e:
            logger.warning(f'{check} analysis failed: {type(e).__name__}: {e}')
            result['error'] = f'{type(e).__name__}: {e}'
        return result

    def _gas_leak(self, payload: bytes):
        triples, meta = decode_frame_triples(payload)
        images = [concentration_length(t, self.params.dark_floor) for t in triples]
        model = self.models['flow']
        plume = max((im.plume_pixels(model.plume_threshold) for im in images), default=0)
        rate = estimate_flow_rate(images, model) if plume > 0 else 0.0
        cl_mean = np.mean([im.cl for im in images], axis=0)
        values = {'rate_ml_min': float(rate), 'threshold_ml_min': self.params.leak_threshold,
                  'plume_pixels': int(plume), 'max_cl': float(cl_mean.max()), 'wind': meta.get('wind')}
        return rate > self.params.leak_threshold, False, values, {'cl_mean': cl_mean.tolist()}

    def _gas_signature(self, payload: bytes):
        samples, _ = decode_gas_samples(payload)
        label, confidence = classify_gas_signature(samples, self.models['signature'])
        wind = np.mean([s.wind for s in samples], axis=0) if samples else np.zeros(2)
        values = {'label': label, 'confidence': float(confidence), 'samples': len(samples),
                  'wind': [float(wind[0]), float(wind[1])]}
        return label != 'clean', False, values, {}

    def _doa(self, payload: bytes):
        frame, meta = decode_mic_frame(payload)
        res = doa_estimate(frame, params=self.doa_params)
        heading = pose_from(meta['pose']).theta if meta.get('pose') else 0.0
        bearings = [math.degrees(wrap_angle(heading + math.radians(a))) for a in res.azimuths]
        values = {'azimuths_deg': [float(a) for a in res.azimuths], 'bearings_world_deg': bearings,
                  'method': res.method, 'f_band': list(self.doa_params.f_band)}
        details = {'grid_deg': res.grid.tolist(), 'powers': res.powers.tolist()}
        return False, bool(res.azimuths), values, details

    def _sound_anomaly(self, payload: bytes):
        frame, _ = decode_mic_frame(payload)
        model = self.models['autoencoder']
        score, anomalous = sound_anomaly_score(frame, model)
        values = {'score': score, 'threshold': float(model.threshold)}
        if 'soundclass' in self.models:
            label, margin = classify_sound_source(frame, self.models['soundclass'])
            values.update(sound_class=label, class_margin=float(margin) if math.isfinite(margin) else None)
        return anomalous, False, values, {}

    def _oil(self, payload: bytes):
        pair, _ = decode_frame_pair(payload)
        p = self.params
        regions = detect_oil(pair, p.oil_min_area_px, p.oil_k, p.oil_min_contrast)
        values = {'regions': len(regions),
                  'largest_area_px': regions[0].area_px if regions else 0,
                  'centroids_xy': [list(r.centroid_xy) for r in regions]}
        details = {'regions': [asdict(r) for r in regions],
                   'contrast': (np.asarray(pair.uv) - np.asarray(pair.ambient)).tolist()}
        return bool(regions), False, values, details

    def _require_reference(self) -> OccupancyGrid:
        if self.reference_grid is None:
            raise LookupError('reference map not available')
        return self.reference_grid

    def _channel(self, payload: bytes):
        scan, meta = decode_scan(payload)
        grid = self._require_reference()
        cells = detect_channels(scan, self.ground_profile, pose_from(meta['pose']), grid, self.tilted_params,
                                self.params.channel_threshold)
        points = hazard_points(grid, cells)
        values = {'cells': len(cells), 'hazard_points': points.round(3).tolist()}
        return False, bool(cells), values, {'cells': [list(c) for c in cells]}

    def _map_diff(self, payload: bytes):
        grid, meta = decode_grid(payload)
        reference = self._require_reference()
        agents = [(x, y, r + self.params.agent_margin) for x, y, r in meta.get('agents', [])]
        mask = ignore_mask(reference, self.params.boundary_margin_cells, agents)
        regions = diff_maps(reference, grid, self.params.min_blob_cells, mask)
        values = {'regions': len(regions),
                  'changes': [{'polarity': r.polarity, 'cells': r.cells, 'centroid_xy': list(r.centroid_xy)}
                              for r in regions]}
        details = {'regions': [asdict(r) for r in regions]}
        return bool(regions), False, values, details


def build_service(cfg: Config, models: Mapping[str, Any], reference_grid: Optional[OccupancyGrid],
                  scenario_sensors: Optional[Mapping[str, Any]] = None) -> AnalyticsService:
    tilted = deep_merge(dict(cfg.section('sensors.tilted')), (scenario_sensors or {}).get('tilted', {}) or {})
    return AnalyticsService(models, reference_grid,
                            params_from(AnalyticsParams, cfg.section('analytics.service')),
                            params_from(DoaParams, cfg.section('analytics.doa')),
                            params_from(TiltedScannerParams, tilted))


class ServerAgent:
    """Answers analysis requests arriving over the bus.

    Data payloads are kept by request key until the matching ``analyze``
    command arrives. Each check has its own single-worker executor, so a slow
    gas analysis never delays a DOA answer and each check's requests are
    handled in arrival order.
    """

    def __init__(self, client: BusClient, service: AnalyticsService):
        """Initialize the server agent.

        Args:
            client: started bus client subscribed to the data topics and ``mission/cmd``
            service: analytics service doing the work
        """
        self.client = client
        self.service = service
        self.data: Dict[str, Tuple[bytes, int]] = {}
        self.data_topics = set(DATA_TOPIC.values())
        self.executors = {check: ThreadPoolExecutor(max_workers=1, thread_name_prefix=f'analytics-{check}')
                          for check in CHECKS}
        self._publish_lock = threading.Lock()
        self.answered = 0

    @staticmethod
    def subscriptions():
        return sorted(set(DATA_TOPIC.values())) + [CMD_TOPIC]

    def handle(self, env: Envelope) -> None:
        if env.topic in self.data_topics:
            try:
                key = unpack_payload(env.payload)[0].get('request')
            except Exception as e:
                logger.warning(f'Dropping undecodable payload on {env.topic}: {e}')
                return
            if key:
                self.data[key] = (env.payload, env.timestamp_ns)
            return
        if env.topic != CMD_TOPIC:
            return
        try:
            cmd = decode_json(env.payload)
        except Exception as e:
            logger.warning(f'Dropping undecodable command: {e}')
            return
        if cmd.get('type') != 'analyze':
            return
        key, check = cmd.get('request'), cmd.get('check')
        if check not in self.executors:
            logger.warning(f'Request {key} names unknown check {check!r}')
            return
        if key not in self.data:
            # the data frame was lost; the robot resends both on retry
            logger.warning(f'Request {key}: no data received yet, waiting for a retry')
            return
        payload, stamp = self.data[key]
        self.executors[check].submit(self._run, check, payload, int(cmd.get('attempt', 1)), stamp)

    def _run(self, check: str, payload: bytes, attempt: int, stamp: int) -> None:
        result = self.service.analyze(check, payload, attempt)
        with self._publish_lock:
            self.client.publish(RESULT_TOPIC[check], encode_json(result), timestamp_ns=stamp)
            self.answered += 1
        logger.info(f'Answered {result.get("request")} (attempt {attempt}): '
                    f'{"error " + result["error"] if not result["ok"] else "anomalous" if result["anomalous"] else "ok"}')

    def serve(self, stop: threading.Event, poll: float = 0.1) -> int:
        """Handle messages until ``stop`` is set; returns the number of answers sent."""
        logger.info('Server agent serving analysis requests')
        try:
            while not stop.is_set():
                env = self.client.receive(timeout=poll)
                if env is not None:
                    self.handle(env)
        finally:
            self.shutdown()
        logger.info(f'Server agent stopped after {self.answered} answers')
        return self.answered

    def shutdown(self) -> None:
        for ex in self.executors.values():
            ex.shutdown(wait=True)

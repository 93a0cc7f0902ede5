"""
Mission orchestration: broker, server and robot, plus a recorder writing the
mission log.

``mode='processes'`` runs the robot and the server as separate OS processes
talking over the broker's TCP sockets; ``mode='single'`` keeps everything in
one process (server on a thread) for debugging and tests. Both produce the
same report for the same inputs.
"""
import logging
import multiprocessing as mp
import os
import queue
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from config import Config, ConfigError, params_from
from msgbus import Broker, BusClient, FaultPolicy, LogWriter
from simworld.scenario import Scenario, load_scenario
from .checkpoint_evaluator import BusAnalyticsLink
from .mission_plan import MissionPlan, plan_from_dict
from .report import MissionReport, build_report
from .robot_agent import RobotAgent, RobotOutcome, RobotSetup, world_params
from .server_agent import ServerAgent, build_service, load_models

logger = logging.getLogger(__name__)

MODES = ('single', 'processes')


@dataclass(frozen=True)
class RunnerParams:
    mode: str = 'single'
    retries: int = 3
    response_timeout: float = 5.0
    connect_timeout: float = 10.0
    report_timeout: float = 30.0
    host: str = '127.0.0.1'
    queue_capacity: int = 65536
    models_dir: str = 'models'
    log_dir: str = 'logs'

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f'mode must be one of {MODES}, got {self.mode!r}')
        if self.retries < 0:
            raise ValueError(f'retries must be >= 0, got {self.retries}')


def runner_params(cfg: Config, **overrides) -> RunnerParams:
    section = cfg.section('runner')
    section.pop('robot', None)
    return params_from(RunnerParams, section, **{k: v for k, v in overrides.items() if v is not None})


def fault_policy(cfg: Config, seed_offset: int = 0) -> FaultPolicy:
    policy = params_from(FaultPolicy, cfg.section('bus.faults'))
    return FaultPolicy(policy.drop_prob, policy.latency_ms, policy.jitter_ms, policy.seed + seed_offset)


def _connect(host: str, port: int, subscriptions, name: str, timeout: float,
             faults: Optional[FaultPolicy] = None) -> BusClient:
    client = BusClient(host, port, subscriptions, name=name, faults=faults).start()
    if not client.wait_connected(timeout) or not client.sync(timeout):
        client.close()
        raise ConnectionError(f'{name}: could not reach the broker at {host}:{port}')
    return client


class Recorder:
    """Subscribes to every topic and appends what it hears to the mission log."""

    def __init__(self, client: BusClient, writer: Optional[LogWriter]):
        self.client = client
        self.writer = writer
        self.report_seen = threading.Event()
        self.stop = threading.Event()
        self.thread = threading.Thread(target=self._loop, name='recorder', daemon=True)

    def start(self) -> 'Recorder':
        self.thread.start()
        return self

    def _loop(self) -> None:
        while True:
            env = self.client.receive(timeout=0.1)
            if env is None:
                if self.stop.is_set():
                    return
                continue
            if self.writer is not None:
                self.writer.write_envelope(env)
            if env.topic == 'mission/report':
                self.report_seen.set()

    def close(self) -> None:
        self.stop.set()
        self.thread.join(timeout=10.0)
        self.client.close()
        if self.writer is not None:
            self.writer.close()


def _process_logging() -> None:
    logging.basicConfig(level=os.environ.get('PLANTSIM_LOG_LEVEL', 'INFO'),
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')


def _load_child_scenario(spec: Dict[str, Any], cfg: Config) -> Scenario:
    return load_scenario(spec['scenario_path'], spec['variant'], spec['seed'], world_params(cfg))


def _server_main(spec: Dict[str, Any], ready, stop) -> None:
    _process_logging()
    cfg = Config(spec['config'])
    scenario = _load_child_scenario(spec, cfg)
    service = build_service(cfg, load_models(spec['models_dir']), scenario.reference_grid, scenario.sensors)
    client = _connect(spec['host'], spec['port'], ServerAgent.subscriptions(), 'server',
                      spec['connect_timeout'], FaultPolicy(**spec['server_faults']))
    ready.set()
    try:
        ServerAgent(client, service).serve(stop)
    finally:
        client.close()


def _robot_main(spec: Dict[str, Any], out) -> None:
    _process_logging()
    try:
        cfg = Config(spec['config'])
        scenario = _load_child_scenario(spec, cfg)
        plan = plan_from_dict(spec['plan'])
        out.put(_drive(scenario, plan, cfg, spec['host'], spec['port'], FaultPolicy(**spec['robot_faults'])))
    except Exception as e:
        logger.exception(f'Robot process failed: {e}')
        out.put(None)


def _await_outcome(proc, out, poll: float = 1.0) -> Optional[RobotOutcome]:
    """Outcome the robot process put on ``out``; RuntimeError when it exits without one."""
    while True:
        try:
            return out.get(timeout=poll)
        except queue.Empty:
            if not proc.is_alive():
                # it may have put the outcome just before exiting
                try:
                    return out.get(timeout=poll)
                except queue.Empty:
                    raise RuntimeError(f'robot process exited with code {proc.exitcode} and no outcome')


def _await_ready(proc, ready, timeout: float, poll: float = 1.0) -> None:
    waited = 0.0
    while not ready.wait(poll):
        waited += poll
        if not proc.is_alive():
            raise RuntimeError(f'server process exited with code {proc.exitcode} before connecting')
        if waited >= timeout:
            raise ConnectionError('server process did not come up')


def _drive(scenario: Scenario, plan: MissionPlan, cfg: Config, host: str, port: int,
           faults: FaultPolicy) -> RobotOutcome:
    params = runner_params(cfg)
    client = _connect(host, port, ['analytics/*'], 'robot', params.connect_timeout, faults)
    try:
        link = BusAnalyticsLink(client, params.response_timeout, params.retries)
        robot = RobotAgent(scenario, plan, link, RobotSetup.from_config(cfg, scenario.sensors), client)
        link.stamp_ns = robot.stamp_ns
        return robot.run()
    finally:
        client.close()


def run_mission(scenario: Scenario, plan: MissionPlan, cfg: Config, models_dir=None, log_path=None,
                mode: Optional[str] = None, faults: Optional[FaultPolicy] = None) -> MissionReport:
    """Run one inspection round and build its report.

    Args:
        scenario: loaded scenario (``processes`` mode needs it to come from a file)
        plan: inspection route
        cfg: layered configuration
        models_dir: directory with the analytics model files (``runner.models_dir`` by default)
        log_path: where to write the mission log; None records nothing
        mode: 'single' or 'processes' (``runner.mode`` by default)
        faults: fault policy for the robot and server links (``bus.faults`` by default)

    Returns:
        MissionReport; ``complete`` is False when the watchdog ended the round
    """
    params = runner_params(cfg, mode=mode, models_dir=str(models_dir) if models_dir else None)
    faults = faults or fault_policy(cfg)
    server_faults = FaultPolicy(faults.drop_prob, faults.latency_ms, faults.jitter_ms, faults.seed + 1)
    if params.mode == 'processes' and scenario.path is None:
        raise ConfigError('processes mode needs a scenario loaded from a file')

    broker = Broker(params.host, 0, params.queue_capacity)
    port = broker.start()
    recorder = None
    stop = None
    server_thread = server_proc = server_client = None
    try:
        writer = LogWriter(log_path, scenario.seed, scenario.digest) if log_path else None
        recorder = Recorder(_connect(params.host, port, ['*'], 'recorder', params.connect_timeout), writer).start()

        if params.mode == 'single':
            service = build_service(cfg, load_models(params.models_dir), scenario.reference_grid, scenario.sensors)
            server_client = _connect(params.host, port, ServerAgent.subscriptions(), 'server',
                                     params.connect_timeout, server_faults)
            stop = threading.Event()
            server_thread = threading.Thread(target=ServerAgent(server_client, service).serve, args=(stop,),
                                             name='server', daemon=True)
            server_thread.start()
            outcome = _drive(scenario, plan, cfg, params.host, port, faults)
        else:
            ctx = mp.get_context('spawn')
            spec = {'config': cfg.to_dict(), 'scenario_path': str(scenario.path), 'variant': scenario.variant,
                    'seed': scenario.seed, 'plan': plan.to_dict(), 'models_dir': params.models_dir,
                    'host': params.host, 'port': port, 'connect_timeout': params.connect_timeout,
                    'robot_faults': asdict(faults), 'server_faults': asdict(server_faults)}
            ready, stop, out = ctx.Event(), ctx.Event(), ctx.Queue()
            server_proc = ctx.Process(target=_server_main, args=(spec, ready, stop), name='plantsim-server')
            server_proc.start()
            _await_ready(server_proc, ready, params.connect_timeout + 60.0)
            robot_proc = ctx.Process(target=_robot_main, args=(spec, out), name='plantsim-robot')
            robot_proc.start()
            outcome = _await_outcome(robot_proc, out)
            robot_proc.join(timeout=30.0)
            if outcome is None:
                raise RuntimeError('robot process failed; see its log')

        if writer is not None and not recorder.report_seen.wait(params.report_timeout):
            logger.warning('Mission report not seen by the recorder; the log may be incomplete')
    finally:
        if stop is not None:
            stop.set()
        if server_thread is not None:
            server_thread.join(timeout=30.0)
        if server_client is not None:
            server_client.close()
        if server_proc is not None:
            server_proc.join(timeout=30.0)
            if server_proc.is_alive():
                server_proc.terminate()
        if recorder is not None:
            recorder.close()
        broker.stop()

    return build_report(plan, outcome.records, outcome.results, outcome.route, scenario.name, scenario.variant,
                        scenario.seed, scenario.digest)


def default_log_path(params: RunnerParams, scenario: Scenario, root: Path) -> Path:
    name = f'{scenario.name}{"_" + scenario.variant if scenario.variant else ""}_seed{scenario.seed}.plog'
    return root / params.log_dir / name


def run_robot(scenario: Scenario, plan: MissionPlan, cfg: Config, host: str, port: int) -> MissionReport:
    """Robot side only, against a broker and server started elsewhere (``robot`` command)."""
    outcome = _drive(scenario, plan, cfg, host, port, fault_policy(cfg))
    return build_report(plan, outcome.records, outcome.results, outcome.route, scenario.name, scenario.variant,
                        scenario.seed, scenario.digest)


def serve_analytics(scenario: Scenario, cfg: Config, host: str, port: int, stop: threading.Event,
                    models_dir=None) -> None:
    """Analytics server only, until ``stop`` is set (``server`` command)."""
    params = runner_params(cfg, models_dir=str(models_dir) if models_dir else None)
    service = build_service(cfg, load_models(params.models_dir), scenario.reference_grid, scenario.sensors)
    client = _connect(host, port, ServerAgent.subscriptions(), 'server', params.connect_timeout,
                      fault_policy(cfg, seed_offset=1))
    logger.info(f'Analytics server connected to {host}:{port}')
    try:
        ServerAgent(client, service).serve(stop)
    finally:
        client.close()

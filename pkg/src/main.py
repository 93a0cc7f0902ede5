"""
Command line entry point.

    python src/main.py mission run scenarios/wastewater_round.yaml --scenario scenarios/wastewater.yaml
    python src/main.py replay logs/wastewater_seed7.plog --scenario scenarios/wastewater.yaml
    python src/main.py train all
    python src/main.py report render reports/wastewater_round.json --formats text csv pdf

Exit codes: 0 complete round, 2 partial (incomplete) round, 3 configuration error, 1 anything else.
"""
import argparse
import logging
import os
import sys
import threading
import time
from pathlib import Path

from dotenv import load_dotenv

from config import ROOT_DIR, Config, ConfigError, load_config

logging.basicConfig(
    level=os.environ.get('PLANTSIM_LOG_LEVEL', 'INFO'),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2
EXIT_CONFIG = 3

DEFAULT_SCENARIO = ROOT_DIR / 'scenarios' / 'wastewater.yaml'
MODEL_KINDS = ('autoencoder', 'flow', 'signature', 'soundclass')


def project_path(path) -> Path:
    path = Path(path)
    return path if path.is_absolute() else ROOT_DIR / path


def _load_scenario(args, cfg: Config):
    from agents.robot_agent import world_params
    from simworld.scenario import load_scenario
    return load_scenario(args.scenario, args.variant, args.seed, world_params(cfg))


def _write_report(report, cfg: Config, args, reference_grid=None):
    from utils.report_render import render_report
    out_dir = project_path(args.report_dir or cfg.get('report.out_dir', 'reports'))
    formats = args.formats or list(cfg.get('report.formats', ['text', 'csv', 'jsonl']))
    if 'json' not in formats:
        formats = list(formats) + ['json']
    stem = f'{report.name}_{report.scenario}{"_" + report.variant if report.variant else ""}_seed{report.seed}'
    return render_report(report, out_dir, formats, plots=args.plots or bool(cfg.get('report.plots', False)),
                         reference_grid=reference_grid, stem=stem)


def _exit_for(report) -> int:
    s = report.summary
    print(f'{report.name}: {s.get("checks_executed", 0)}/{s.get("checks_planned", 0)} checks, '
          f'{s.get("anomaly_count", 0)} anomalies, '
          f'{"complete" if report.complete else "INCOMPLETE (" + report.incomplete_reason + ")"}')
    return EXIT_OK if report.complete else EXIT_PARTIAL


def _wait_for_interrupt(stop: threading.Event) -> None:
    try:
        while not stop.is_set():
            time.sleep(0.2)
    except KeyboardInterrupt:
        logger.info('Interrupted')
        stop.set()


def cmd_sim(args, cfg: Config) -> int:
    from msgbus import Broker
    broker = Broker(cfg.get('bus.host', '127.0.0.1'), int(args.port or cfg.get('bus.port', 7447)),
                    int(cfg.get('bus.queue_capacity', 1024)))
    port = broker.start()
    logger.info(f'Broker listening on {broker.host}:{port} (Ctrl+C to stop)')
    try:
        _wait_for_interrupt(threading.Event())
    finally:
        broker.stop()
    return EXIT_OK


def cmd_server(args, cfg: Config) -> int:
    from agents.mission_runner import serve_analytics
    scenario = _load_scenario(args, cfg)
    stop = threading.Event()
    worker = threading.Thread(target=serve_analytics, name='server',
                              args=(scenario, cfg, args.host or cfg.get('bus.host', '127.0.0.1'),
                                    int(args.port or cfg.get('bus.port', 7447)), stop),
                              kwargs={'models_dir': project_path(args.models) if args.models else None}, daemon=True)
    worker.start()
    _wait_for_interrupt(stop)
    worker.join(timeout=10.0)
    return EXIT_OK


def cmd_robot(args, cfg: Config) -> int:
    from agents.mission_plan import load_plan
    from agents.mission_runner import run_robot
    scenario = _load_scenario(args, cfg)
    plan = load_plan(args.plan)
    report = run_robot(scenario, plan, cfg, args.host or cfg.get('bus.host', '127.0.0.1'),
                       int(args.port or cfg.get('bus.port', 7447)))
    _write_report(report, cfg, args, scenario.reference_grid)
    return _exit_for(report)


def cmd_mission_run(args, cfg: Config) -> int:
    from agents.mission_plan import load_plan
    from agents.mission_runner import default_log_path, run_mission, runner_params
    scenario = _load_scenario(args, cfg)
    plan = load_plan(args.plan)
    params = runner_params(cfg)
    log_path = None if args.no_log else (Path(args.log) if args.log else default_log_path(params, scenario, ROOT_DIR))
    if log_path is not None:
        log_path.parent.mkdir(parents=True, exist_ok=True)
    models = project_path(args.models or params.models_dir)
    report = run_mission(scenario, plan, cfg, models_dir=models, log_path=log_path, mode=args.mode)
    written = _write_report(report, cfg, args, scenario.reference_grid)
    if log_path is not None:
        logger.info(f'Mission log: {log_path}')
    if args.record_db:
        sys.path.insert(0, str(ROOT_DIR))
        from db.history import record_mission
        record_mission(report, log_path)
    logger.info(f'Report files: {", ".join(str(p) for p in written)}')
    return _exit_for(report)


def cmd_replay(args, cfg: Config) -> int:
    from agents.replay import replay
    scenario = _load_scenario(args, cfg)
    models = project_path(args.models or cfg.get('runner.models_dir', 'models'))
    report = replay(args.log, cfg, scenario, models_dir=models)
    _write_report(report, cfg, args, scenario.reference_grid)
    return _exit_for(report)


def cmd_train(args, cfg: Config) -> int:
    from analytics.training import train_model
    out_dir = project_path(args.out or cfg.get('runner.models_dir', 'models'))
    kinds = MODEL_KINDS if args.kind == 'all' else (args.kind,)
    for kind in kinds:
        path = train_model(kind, cfg, out_dir, seed=args.seed)
        print(f'{kind}: {path}')
    return EXIT_OK


def cmd_report_render(args, cfg: Config) -> int:
    from utils.report_render import read_report_json, read_report_jsonl, render_report
    src = Path(args.report)
    report = read_report_jsonl(src) if src.suffix == '.jsonl' else read_report_json(src)
    reference = None
    if args.scenario_file:
        from simworld.scenario import load_scenario
        reference = load_scenario(args.scenario_file).reference_grid
    out_dir = project_path(args.report_dir or cfg.get('report.out_dir', 'reports'))
    formats = args.formats or list(cfg.get('report.formats', ['text', 'csv', 'jsonl']))
    for path in render_report(report, out_dir, formats, plots=args.plots, reference_grid=reference, stem=src.stem):
        print(path)
    return EXIT_OK


def _scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument('--scenario', default=str(DEFAULT_SCENARIO), help='scenario YAML file')
    p.add_argument('--variant', default=None, help='scenario variant to overlay (e.g. second_round)')
    p.add_argument('--seed', type=int, default=None, help='overrides the scenario seed')


def _report_args(p: argparse.ArgumentParser) -> None:
    p.add_argument('--report-dir', default=None, help='output directory (report.out_dir)')
    p.add_argument('--formats', nargs='+', default=None, choices=('text', 'csv', 'json', 'jsonl', 'pdf'))
    p.add_argument('--plots', action='store_true', help='also write plotly figures')


def _bus_args(p: argparse.ArgumentParser) -> None:
    p.add_argument('--host', default=None, help='broker host (bus.host)')
    p.add_argument('--port', type=int, default=None, help='broker port (bus.port)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='plantsim', description='Plant inspection robot simulator')
    parser.add_argument('--config', action='append', default=[], help='extra YAML config layer (repeatable)')
    parser.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING...')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('sim', help='run the message broker')
    p.add_argument('--port', type=int, default=None)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser('server', help='run the analytics server against a running broker')
    _scenario_args(p)
    _bus_args(p)
    p.add_argument('--models', default=None, help='model directory (runner.models_dir)')
    p.set_defaults(func=cmd_server)

    p = sub.add_parser('robot', help='run the robot (world simulation inside) against a running broker')
    p.add_argument('plan', help='mission plan YAML')
    _scenario_args(p)
    _bus_args(p)
    _report_args(p)
    p.set_defaults(func=cmd_robot)

    mission = sub.add_parser('mission', help='mission commands').add_subparsers(dest='action', required=True)
    p = mission.add_parser('run', help='broker, server and robot for one inspection round')
    p.add_argument('plan', help='mission plan YAML')
    _scenario_args(p)
    _report_args(p)
    p.add_argument('--mode', choices=('single', 'processes'), default=None, help='runner.mode')
    p.add_argument('--models', default=None)
    p.add_argument('--log', default=None, help='mission log path (default logs/<scenario>_seed<N>.plog)')
    p.add_argument('--no-log', action='store_true')
    p.add_argument('--record-db', action='store_true', help='store the report in the mission history database')
    p.set_defaults(func=cmd_mission_run)

    p = sub.add_parser('replay', help='rebuild a report from a mission log')
    p.add_argument('log')
    _scenario_args(p)
    _report_args(p)
    p.add_argument('--models', default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser('train', help='train analytics models on synthetic data')
    p.add_argument('kind', choices=MODEL_KINDS + ('all',))
    p.add_argument('--out', default=None, help='model directory (runner.models_dir)')
    p.add_argument('--seed', type=int, default=None)
    p.set_defaults(func=cmd_train)

    report = sub.add_parser('report', help='report commands').add_subparsers(dest='action', required=True)
    p = report.add_parser('render', help='render a saved JSON / JSON-lines report')
    p.add_argument('report')
    p.add_argument('--scenario-file', default=None, help='scenario for the map-diff plot background')
    _report_args(p)
    p.set_defaults(func=cmd_report_render)
    return parser


def main(argv=None) -> int:
    """Parse, build the config layers, dispatch."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    if args.log_level:
        logging.getLogger().setLevel(args.log_level.upper())
    try:
        cfg = load_config(args.config)
        if getattr(args, 'port', None) is not None:
            cfg.set('bus.port', args.port)
        return args.func(args, cfg)
    except ConfigError as e:
        logger.error(f'Configuration error: {e}')
        return EXIT_CONFIG
    except KeyboardInterrupt:
        logger.info('Stopped by user')
        return EXIT_PARTIAL
    except Exception as e:
        logger.exception(f'Error: {e}')
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())

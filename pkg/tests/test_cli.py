import json

import pytest

from agents.mission_plan import Checkpoint, MissionPlan
from agents.report import build_report
from main import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, _exit_for, build_parser, main
from simworld.types import Pose2D

from conftest import PLAN_PATH, SCENARIO_PATH


def _report(complete=True):
    plan = MissionPlan((Pose2D(),), (Checkpoint(0, ('oil',), 0.5),), name='cli')
    return build_report(plan, [], {}, {'complete': complete, 'reason': '' if complete else 'watchdog'},
                        scenario='unit')


class TestParser:
    def test_mission_run(self):
        args = build_parser().parse_args(['--config', 'a.yaml', '--config', 'b.yaml', 'mission', 'run',
                                          'plan.yaml', '--variant', 'second_round', '--seed', '3',
                                          '--mode', 'processes', '--formats', 'text', 'pdf'])
        assert args.config == ['a.yaml', 'b.yaml']
        assert (args.command, args.action, args.plan) == ('mission', 'run', 'plan.yaml')
        assert (args.variant, args.seed, args.mode) == ('second_round', 3, 'processes')
        assert args.formats == ['text', 'pdf']
        assert not args.no_log

    def test_train_kind_is_checked(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['train', 'everything'])

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestExitCodes:
    def test_complete_and_partial(self):
        assert _exit_for(_report(True)) == EXIT_OK
        assert _exit_for(_report(False)) == EXIT_PARTIAL

    def test_missing_config_layer(self, tmp_path):
        assert main(['--config', str(tmp_path / 'missing.yaml'), 'train', 'flow']) == EXIT_CONFIG

    def test_unknown_config_key(self, tmp_path):
        layer = tmp_path / 'bad.yaml'
        layer.write_text('train:\n  flow:\n    n_sequence: 3\n')
        assert main(['--config', str(layer), 'train', 'flow', '--out', str(tmp_path)]) == EXIT_CONFIG

    def test_invalid_plan(self, tmp_path):
        plan = tmp_path / 'plan.yaml'
        plan.write_text('waypoints: [[1.0, 1.0]]\ncheckpoints:\n  - {waypoint: 0, checks: [smell], dwell: 1.0}\n')
        assert main(['mission', 'run', str(plan), '--scenario', str(SCENARIO_PATH), '--no-log']) == EXIT_CONFIG

    def test_unknown_variant(self):
        assert main(['mission', 'run', str(PLAN_PATH), '--scenario', str(SCENARIO_PATH),
                     '--variant', 'third_round', '--no-log']) == EXIT_CONFIG


class TestCommands:
    def test_train(self, tmp_path):
        layer = tmp_path / 'small.yaml'
        layer.write_text('train:\n  soundclass:\n    n_per_class: 10\n')
        assert main(['--config', str(layer), 'train', 'soundclass', '--out', str(tmp_path / 'models')]) == EXIT_OK
        assert (tmp_path / 'models' / 'soundclass.psm').exists()

    def test_report_render(self, tmp_path):
        src = tmp_path / 'saved.json'
        src.write_text(json.dumps(_report().to_dict()))
        out = tmp_path / 'out'
        assert main(['report', 'render', str(src), '--report-dir', str(out), '--formats', 'text', 'csv']) == EXIT_OK
        assert sorted(p.name for p in out.iterdir()) == ['saved.csv', 'saved.txt']

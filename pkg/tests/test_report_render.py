import json

import pytest

from agents.mission_plan import Checkpoint, MissionPlan, load_plan, plan_from_dict
from agents.report import CLEAR, FINDING, SKIPPED, MissionReport, build_report
from config import ConfigError
from simworld.types import Pose2D
from utils.report_render import (CSV_COLUMNS, SUMMARY_KEYS, read_report_csv, read_report_json, read_report_jsonl,
                                 render_report, render_text, report_frame)


def _plan():
    return MissionPlan((Pose2D(1.0, 1.0), Pose2D(2.0, 2.0), Pose2D(3.0, 1.0)),
                       (Checkpoint(0, ('oil', 'doa'), 0.5, 'pump bay'),
                        Checkpoint(1, ('map_diff',), 0.5),
                        Checkpoint(2, ('sound_anomaly',), 0.5, 'far end')),
                       name='unit')


def _record(index, waypoint, checks, skipped=''):
    return {'checkpoint': index, 'waypoint': waypoint, 'label': '', 'pose': [1.0 + index, 1.0, 0.25],
            't_start': 10.0 * index, 't_end': 10.0 * index + 0.5, 'skipped': skipped,
            'checks': {c: {'attempts': 1, 'answered': not skipped, 'reason': ''} for c in checks}}


def _report(route=None, records=None):
    records = records if records is not None else [_record(0, 0, ('oil', 'doa')), _record(1, 1, ('map_diff',))]
    results = {
        (0, 'oil'): {'ok': True, 'anomalous': True, 'finding': True,
                     'values': {'regions': 1, 'centroids_xy': [[1.5, 1.0]]}, 'details': {}},
        (0, 'doa'): {'ok': True, 'anomalous': False, 'finding': True,
                     'values': {'azimuths_deg': [40.0]}, 'details': {}},
        (1, 'map_diff'): {'ok': False, 'error': 'LookupError: reference map not available'},
    }
    route = route or {'complete': False, 'reason': 'watchdog expired', 'waypoints_reached': 2,
                      'distance_m': 3.5, 'sim_time': 42.0}
    return build_report(_plan(), records, results, route, scenario='unit-scenario', seed=7, digest='abc')


class TestBuildReport:
    def test_one_outcome_per_planned_check(self):
        report = _report()
        assert [(o.checkpoint, o.check) for o in report.outcomes()] == _plan().planned_checks()

    def test_statuses(self):
        outcomes = {(o.checkpoint, o.check): o for o in _report().outcomes()}
        assert outcomes[(0, 'oil')].status == FINDING and outcomes[(0, 'oil')].anomalous
        # a doa bearing is a finding but not a plant anomaly
        assert outcomes[(0, 'doa')].status == FINDING and not outcomes[(0, 'doa')].anomalous
        assert outcomes[(1, 'map_diff')].status == SKIPPED
        assert 'reference map' in outcomes[(1, 'map_diff')].reason
        assert outcomes[(2, 'sound_anomaly')].status == SKIPPED
        assert outcomes[(2, 'sound_anomaly')].reason.startswith('checkpoint not reached')

    def test_summary(self):
        report = _report()
        s = report.summary
        assert set(SUMMARY_KEYS) <= set(s)
        assert s['checks_planned'] == 4
        assert s['checks_executed'] == 2
        assert s['findings'] == 2
        assert s['skipped'] == 2
        assert s['anomaly_count'] == 1
        assert s['route_completion'] == pytest.approx(2 / 3)
        assert not report.complete
        assert report.incomplete_reason == 'watchdog expired'

    def test_skipped_record(self):
        records = [_record(0, 0, ('oil', 'doa'), skipped='no path')]
        report = _report(records=records)
        assert all(o.status == SKIPPED and o.reason == 'no path' for o in report.checkpoints[0].outcomes)

    def test_missing_answer_is_skipped(self):
        report = build_report(_plan(), [_record(2, 2, ('sound_anomaly',))], {},
                              {'complete': True, 'waypoints_reached': 3})
        outcome = report.checkpoints[2].outcomes[0]
        assert outcome.status == SKIPPED
        assert outcome.reason == 'no analytics response'
        assert report.complete

    def test_clear_result(self):
        report = build_report(_plan(), [_record(2, 2, ('sound_anomaly',))],
                              {(2, 'sound_anomaly'): {'ok': True, 'anomalous': False, 'values': {'score': 0.1}}},
                              {'complete': True, 'waypoints_reached': 3})
        assert report.checkpoints[2].outcomes[0].status == CLEAR

    def test_dict_round_trip(self):
        report = _report()
        assert MissionReport.from_dict(json.loads(json.dumps(report.to_dict()))) == report


class TestRender:
    def test_text(self):
        text = render_text(_report())
        assert 'INCOMPLETE - watchdog expired' in text
        assert 'Checkpoint 0 [pump bay]' in text
        assert '(not reached)' in text
        assert '! oil' in text

    def test_frame_columns(self):
        df = report_frame(_report())
        assert list(df.columns) == list(CSV_COLUMNS)
        assert len(df) == 4

    def test_csv_round_trip(self, tmp_path):
        report = _report()
        (path,) = render_report(report, tmp_path, formats=['csv'])
        df = read_report_csv(path)
        assert list(df['check']) == ['oil', 'doa', 'map_diff', 'sound_anomaly']
        assert list(df['status']) == [o.status for o in report.outcomes()]
        assert df['values'][0] == {'regions': 1, 'centroids_xy': [[1.5, 1.0]]}
        assert df['pose_x'][0] == 1.0

    def test_empty_report_csv_has_header(self, tmp_path):
        plan = MissionPlan((Pose2D(),), (), name='empty')
        report = build_report(plan, [], {}, {'complete': True, 'waypoints_reached': 1})
        (path,) = render_report(report, tmp_path, formats=['csv'])
        assert path.read_text().strip() == ','.join(CSV_COLUMNS)

    def test_json_and_jsonl_round_trip(self, tmp_path):
        report = _report()
        paths = render_report(report, tmp_path, formats=['json', 'jsonl'])
        assert read_report_json(paths[0]).to_dict() == report.to_dict()
        assert read_report_jsonl(paths[1]).to_dict() == report.to_dict()

    def test_pdf(self, tmp_path):
        (path,) = render_report(_report(), tmp_path, formats=['pdf'], stem='r')
        assert path.name == 'r.pdf'
        assert path.read_bytes().startswith(b'%PDF')

    def test_plots(self, tmp_path):
        plan = MissionPlan((Pose2D(),), (Checkpoint(0, ('doa',), 0.5),))
        result = {'ok': True, 'finding': True, 'values': {'azimuths_deg': [30.0]},
                  'details': {'grid_deg': [0.0, 30.0, 60.0], 'powers': [0.1, 1.0, 0.2]}}
        report = build_report(plan, [_record(0, 0, ('doa',))], {(0, 'doa'): result},
                              {'complete': True, 'waypoints_reached': 1})
        written = render_report(report, tmp_path, formats=['text'], plots=True)
        assert any(p.name == 'cp0_doa.html' for p in written)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError, match='unknown report formats'):
            render_report(_report(), tmp_path, formats=['xml'])


class TestMissionPlan:
    def test_round_plan_loads(self, wastewater_plan):
        assert len(wastewater_plan.waypoints) == 6
        assert len(wastewater_plan.checkpoints) == 6

    def test_dict_round_trip(self):
        plan = _plan()
        assert plan_from_dict(plan.to_dict()) == plan

    @pytest.mark.parametrize('checkpoint, message', [
        ({'waypoint': 5, 'checks': ['oil'], 'dwell': 1.0}, 'refers to waypoint'),
        ({'waypoint': 0, 'checks': ['smell'], 'dwell': 1.0}, 'unknown checks'),
        ({'waypoint': 0, 'checks': ['oil', 'oil'], 'dwell': 1.0}, 'duplicate'),
        ({'waypoint': 0, 'checks': ['gas_signature'], 'dwell': 1.0}, 'shorter than'),
        ({'checks': ['oil']}, 'invalid mission plan'),
    ])
    def test_invalid_checkpoints(self, checkpoint, message):
        with pytest.raises(ConfigError, match=message):
            plan_from_dict({'waypoints': [[0, 0]], 'checkpoints': [checkpoint]})

    def test_needs_waypoints(self):
        with pytest.raises(ConfigError, match='at least one waypoint'):
            plan_from_dict({'waypoints': []})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match='not found'):
            load_plan(tmp_path / 'nope.yaml')

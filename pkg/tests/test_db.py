import json

import pytest

from agents.mission_plan import Checkpoint, MissionPlan
from agents.report import build_report
from db.history import mission_history, record_mission
from db.models import Base, CheckFinding, MissionRun
from db.session import get_session, make_engine
from simworld.types import Pose2D


@pytest.fixture
def engine():
    engine = make_engine('sqlite://')
    Base.metadata.create_all(engine)
    return engine


def _report(scenario='plant', anomalous=True):
    plan = MissionPlan((Pose2D(1.0, 2.0),), (Checkpoint(0, ('oil', 'doa'), 0.5, 'bay'),), name='round')
    record = {'checkpoint': 0, 'waypoint': 0, 'pose': [1.0, 2.0, 0.0], 't_start': 1.0, 't_end': 1.5,
              'checks': {'oil': {'attempts': 1}, 'doa': {'attempts': 2}}}
    results = {(0, 'oil'): {'ok': True, 'anomalous': anomalous, 'values': {'regions': int(anomalous)}},
               (0, 'doa'): {'ok': True, 'finding': True, 'values': {'azimuths_deg': [10.0]}}}
    return build_report(plan, [record], results, {'complete': True, 'waypoints_reached': 1},
                        scenario=scenario, seed=3, digest='d1')


class TestRecordMission:
    def test_stores_run_and_findings(self, engine):
        run_id = record_mission(_report(), log_path='logs/x.jsonl', session=get_session(engine))
        assert run_id is not None
        session = get_session(engine)
        run = session.get(MissionRun, run_id)
        assert run.plan_name == 'round'
        assert run.anomaly_count == 1
        assert run.log_path == 'logs/x.jsonl'
        findings = session.query(CheckFinding).filter_by(run_id=run_id).order_by(CheckFinding.check).all()
        assert [(f.check, f.status, f.attempts) for f in findings] == [('doa', 'finding', 2), ('oil', 'finding', 1)]
        assert findings[1].values == {'regions': 1}
        assert findings[0].pose_x == 1.0

    def test_history_latest_first(self, engine):
        first = record_mission(_report(anomalous=False), session=get_session(engine))
        second = record_mission(_report(), session=get_session(engine))
        record_mission(_report(scenario='other'), session=get_session(engine))
        history = mission_history('plant', session=get_session(engine))
        assert [h['id'] for h in history] == [second, first]
        assert history[0]['anomalies'] == [(0, 'oil')]
        assert history[1]['anomalies'] == []

    def test_history_limit(self, engine):
        for _ in range(3):
            record_mission(_report(), session=get_session(engine))
        assert len(mission_history(limit=2, session=get_session(engine))) == 2

    def test_falls_back_to_jsonl(self, tmp_path):
        # no tables: the insert fails
        broken = get_session(make_engine('sqlite://'))
        fallback = tmp_path / 'history.jsonl'
        assert record_mission(_report(), session=broken, fallback_file=fallback) is None
        row = json.loads(fallback.read_text().strip())
        assert row['plan_name'] == 'round'
        assert row['anomaly_count'] == 1
        assert row['complete'] is True

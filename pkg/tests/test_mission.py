"""End-to-end rounds through broker, server and robot. Each round takes a while; all marked slow."""
import pytest

from agents.mission_runner import run_mission
from agents.replay import replay
from agents.report import SKIPPED
from agents.robot_agent import world_params
from config import ConfigError, read_yaml
from msgbus import FaultPolicy, LogFormatError, read_log
from msgbus.logfile import LOG_HEADER
from simworld.scenario import load_scenario, scenario_from_dict

from conftest import SCENARIO_PATH

pytestmark = pytest.mark.slow

# true anomalies of the second round: leak (gas camera and e-nose), drip, rattling pump, moved pallet
EXPECTED = {(0, 'gas_leak'), (1, 'gas_signature'), (3, 'oil'), (4, 'sound_anomaly'), (5, 'map_diff')}


@pytest.fixture(scope='module')
def second_round(fast_config):
    return load_scenario(SCENARIO_PATH, 'second_round', params=world_params(fast_config))


@pytest.fixture(scope='module')
def live(tmp_path_factory, second_round, wastewater_plan, fast_config, models_dir):
    log = tmp_path_factory.mktemp('logs') / 'round.plog'
    report = run_mission(second_round, wastewater_plan, fast_config, models_dir=models_dir, log_path=log)
    return report, log


def _anomalies(report):
    return {(o.checkpoint, o.check) for o in report.anomalies()}


class TestRound:
    def test_complete(self, live, wastewater_plan):
        report, _ = live
        assert report.complete
        assert report.summary['waypoints_reached'] == len(wastewater_plan.waypoints)
        assert report.summary['checks_planned'] == len(wastewater_plan.planned_checks())

    def test_finds_the_planted_anomalies(self, live):
        found = _anomalies(live[0])
        assert EXPECTED - {(1, 'gas_signature')} <= found
        assert len(found - EXPECTED) <= 1

    def test_doa_points_at_a_pump(self, live):
        doa = next(o for o in live[0].outcomes() if o.check == 'doa')
        assert doa.status != SKIPPED
        assert doa.values['azimuths_deg']

    def test_deterministic(self, live, second_round, wastewater_plan, fast_config, models_dir):
        again = run_mission(second_round, wastewater_plan, fast_config, models_dir=models_dir)
        assert again.to_dict() == live[0].to_dict()

    def test_first_round_has_no_map_change(self, wastewater, wastewater_plan, fast_config, models_dir):
        report = run_mission(wastewater, wastewater_plan, fast_config, models_dir=models_dir)
        assert (5, 'map_diff') not in _anomalies(report)

    def test_no_leak_variant(self, fast_config, wastewater_plan, models_dir):
        scenario = load_scenario(SCENARIO_PATH, 'no_leak', params=world_params(fast_config))
        found = _anomalies(run_mission(scenario, wastewater_plan, fast_config, models_dir=models_dir))
        assert not found & {(0, 'gas_leak'), (1, 'gas_signature'), (3, 'oil'), (4, 'sound_anomaly')}


class TestReplay:
    def test_replay_matches_live(self, live, second_round, fast_config, models_dir):
        report, log = live
        assert replay(log, fast_config, second_round, models_dir=models_dir).to_dict() == report.to_dict()

    def test_truncated_log(self, live, second_round, fast_config, models_dir, tmp_path):
        _, log = live
        offset = LOG_HEADER.size
        for env in read_log(log).envelopes:
            if env.topic == 'mission/report':
                break
            offset += 4 + len(env.encode())
        cut = tmp_path / 'cut.plog'
        cut.write_bytes(log.read_bytes()[:offset + 10])
        assert read_log(cut).truncated
        report = replay(cut, fast_config, second_round, models_dir=models_dir)
        assert not report.complete
        assert report.incomplete_reason == 'log truncated before the mission report'
        # checkpoints recorded before the cut keep their analyses
        assert report.summary['checks_executed'] > 0

    def test_log_without_plan(self, second_round, fast_config, models_dir, tmp_path, live):
        _, log = live
        header_only = tmp_path / 'empty.plog'
        header_only.write_bytes(log.read_bytes()[:LOG_HEADER.size])
        with pytest.raises(LogFormatError, match='no mission plan'):
            replay(header_only, fast_config, second_round, models_dir=models_dir)


class TestFaults:
    def test_drops_still_complete(self, wastewater, wastewater_plan, fast_config, models_dir):
        report = run_mission(wastewater, wastewater_plan, fast_config, models_dir=models_dir,
                             faults=FaultPolicy(drop_prob=0.1, seed=5))
        assert report.complete
        executed = report.summary['checks_executed'] / report.summary['checks_planned']
        assert executed >= 0.8

    def test_processes_mode_needs_scenario_file(self, wastewater_plan, fast_config, models_dir):
        scenario = scenario_from_dict(read_yaml(SCENARIO_PATH))
        with pytest.raises(ConfigError, match='processes mode'):
            run_mission(scenario, wastewater_plan, fast_config, models_dir=models_dir, mode='processes')

import queue
import threading
from types import SimpleNamespace

import pytest

from agents.mission_runner import _await_outcome, _await_ready, _robot_main


def _proc(alive):
    return SimpleNamespace(is_alive=lambda: alive, exitcode=None if alive else 1)


class TestChildFailures:
    def test_robot_reports_failure_on_bad_scenario(self, fast_config, wastewater_plan, tmp_path):
        spec = {'config': fast_config.to_dict(), 'scenario_path': str(tmp_path / 'missing.yaml'),
                'variant': None, 'seed': 0, 'plan': wastewater_plan.to_dict(), 'host': '127.0.0.1',
                'port': 1, 'robot_faults': {}}
        out = queue.Queue()
        _robot_main(spec, out)
        assert out.get_nowait() is None

    def test_dead_robot_without_outcome(self):
        with pytest.raises(RuntimeError, match='no outcome'):
            _await_outcome(_proc(False), queue.Queue(), poll=0.01)

    def test_outcome_put_before_exit_is_kept(self):
        out = queue.Queue()
        out.put('outcome')
        assert _await_outcome(_proc(False), out, poll=0.01) == 'outcome'

    def test_dead_server_before_ready(self):
        with pytest.raises(RuntimeError, match='before connecting'):
            _await_ready(_proc(False), threading.Event(), timeout=5.0, poll=0.01)

    def test_server_never_ready(self):
        with pytest.raises(ConnectionError):
            _await_ready(_proc(True), threading.Event(), timeout=0.05, poll=0.01)

    def test_ready_server(self):
        ready = threading.Event()
        ready.set()
        _await_ready(_proc(True), ready, timeout=0.05, poll=0.01)

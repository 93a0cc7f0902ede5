"""
Sim-time rate gating for sensor streams.

Each stream (lidar, gascam, enose, mic, clock...) has a period; ``due`` says
whether a sample should be produced at the current sim time. Works on the
simulation clock, never on wall time, so a replayed or sped-up run publishes
exactly the same samples.
"""
import math
import threading
from typing import Dict, Mapping


class RateGate:

    def __init__(self, rates_hz: Mapping[str, float]):
        self.periods: Dict[str, float] = {}
        for name, hz in rates_hz.items():
            if not hz or hz <= 0 or not math.isfinite(hz):
                raise ValueError(f'rate for {name!r} must be a positive finite Hz value, got {hz!r}')
            self.periods[name] = 1.0 / float(hz)
        self.next_due: Dict[str, float] = {name: 0.0 for name in self.periods}
        self.lock = threading.Lock()

    def due(self, name: str, now: float) -> bool:
        """True (and schedule the next slot) when stream `name` is due at sim time `now`."""
        with self.lock:
            if name not in self.periods:
                raise KeyError(f'unknown stream {name!r}')
            # small tolerance so 0.1 + 0.1 + 0.1 still counts as 0.3
            if now + 1e-9 < self.next_due[name]:
                return False
            period = self.periods[name]
            slots = math.floor((now + 1e-9 - self.next_due[name]) / period) + 1
            self.next_due[name] += slots * period
            return True

    def reset(self, now: float = 0.0) -> None:
        with self.lock:
            for name in self.next_due:
                self.next_due[name] = now

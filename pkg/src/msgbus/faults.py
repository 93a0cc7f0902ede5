"""
Fault injection on a client's publish path: random drops, constant latency
and uniform jitter. Drops happen before the frame reaches the broker; delayed
frames pass through a delay line whose release times never decrease, so the
surviving frames keep their order.
"""
import heapq
import logging
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from utils.guards import check_positive, check_probability

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FaultPolicy:
    drop_prob: float = 0.0
    latency_ms: float = 0.0
    jitter_ms: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_probability(self.drop_prob, 'drop_prob')
        check_positive(self.latency_ms, 'latency_ms', allow_zero=True)
        check_positive(self.jitter_ms, 'jitter_ms', allow_zero=True)

    @property
    def is_transparent(self) -> bool:
        return self.drop_prob == 0.0 and self.latency_ms == 0.0 and self.jitter_ms == 0.0


class FaultyLink:
    """Wraps a ``send(raw_bytes)`` callable with a FaultPolicy."""

    def __init__(self, send: Callable[[bytes], None], policy: FaultPolicy,
                 clock: Callable[[], float] = time.monotonic):
        self.inner = send
        self.policy = policy
        self.clock = clock
        self.rng = np.random.default_rng([policy.seed, 0x6C696E6B])
        self.sent = 0
        self.dropped = 0
        self.last_release = 0.0
        self.heap = []
        self.counter = 0
        self.cond = threading.Condition()
        self.closed = False
        self.worker: Optional[threading.Thread] = None
        if self.policy.latency_ms > 0 or self.policy.jitter_ms > 0:
            self.worker = threading.Thread(target=self._release_loop, name='faulty-link', daemon=True)
            self.worker.start()

    def send(self, raw: bytes) -> bool:
        """Returns False when the frame was dropped."""
        if self.policy.drop_prob > 0 and self.rng.random() < self.policy.drop_prob:
            self.dropped += 1
            return False
        if self.worker is None:
            self.inner(raw)
            self.sent += 1
            return True
        delay = (self.policy.latency_ms + self.rng.uniform(0.0, self.policy.jitter_ms)) / 1000.0
        with self.cond:
            release = max(self.clock() + delay, self.last_release)
            self.last_release = release
            heapq.heappush(self.heap, (release, self.counter, raw))
            self.counter += 1
            self.cond.notify()
        return True

    def _release_loop(self) -> None:
        while True:
            with self.cond:
                while not self.heap and not self.closed:
                    self.cond.wait()
                if not self.heap and self.closed:
                    return
                release, _, raw = self.heap[0]
                wait = release - self.clock()
                if wait > 0:
                    self.cond.wait(wait)
                    continue
                heapq.heappop(self.heap)
            try:
                self.inner(raw)
                self.sent += 1
            except Exception as e:
                logger.warning(f'Delayed frame could not be sent: {e}')

    def flush(self, timeout: float = 5.0) -> bool:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self.cond:
                if not self.heap:
                    return True
            time.sleep(0.005)
        return False

    def close(self) -> None:
        with self.cond:
            self.closed = True
            self.cond.notify_all()
        if self.worker is not None:
            self.worker.join(timeout=2.0)


def inject_faults(send: Callable[[bytes], None], policy: FaultPolicy) -> FaultyLink:
    if policy.drop_prob or policy.latency_ms or policy.jitter_ms:
        logger.info(f'Fault injection: drop={policy.drop_prob} latency={policy.latency_ms}ms '
                    f'jitter={policy.jitter_ms}ms')
    return FaultyLink(send, policy)

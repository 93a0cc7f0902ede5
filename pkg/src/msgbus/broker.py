"""
TCP broker.

One accept thread, and per session a reader thread (decode, route) and a
writer thread (drain the session's outbound queue). Frames are forwarded as
the exact bytes the publisher sent. Outbound queues are bounded and drop the
oldest frame when full, so a slow subscriber never stalls a publisher.
"""
import logging
import socket
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .envelope import DEFAULT_MAX_PAYLOAD, BusError, Envelope, FrameDecoder
from .topics import SUBSCRIBE, UNSUBSCRIBE, TopicTable

logger = logging.getLogger(__name__)

DEFAULT_PORT = 7447


class SessionQueue:
    """Bounded FIFO of raw frames with drop-oldest overflow."""

    def __init__(self, capacity: int = 1024):
        if capacity < 1:
            raise ValueError(f'queue capacity must be >= 1, got {capacity}')
        self.items = deque()
        self.capacity = capacity
        self.dropped = 0
        self.closed = False
        self.cond = threading.Condition()

    def put(self, item) -> bool:
        """Enqueue; returns True when an older item had to be dropped."""
        with self.cond:
            dropped = False
            if len(self.items) >= self.capacity:
                self.items.popleft()
                self.dropped += 1
                dropped = True
            self.items.append(item)
            self.cond.notify()
            return dropped

    def get(self, timeout: Optional[float] = None):
        with self.cond:
            if not self.items and not self.closed:
                self.cond.wait(timeout)
            if self.items:
                return self.items.popleft()
            return None

    def close(self) -> None:
        with self.cond:
            self.closed = True
            self.cond.notify_all()

    def __len__(self) -> int:
        with self.cond:
            return len(self.items)


@dataclass
class Delivery:
    session_id: int
    dropped_oldest: bool


@dataclass
class BrokerStats:
    routed: int = 0
    unmatched: int = 0
    delivered: int = 0
    dropped: int = 0
    protocol_errors: int = 0
    sessions_opened: int = 0
    per_session_drops: Dict[int, int] = field(default_factory=dict)


def broker_route(table: TopicTable, queues: Dict[int, SessionQueue], envelope: Envelope,
                 raw: Optional[bytes] = None) -> List[Delivery]:
    """Queue ``raw`` (or the re-encoded envelope) for every subscriber of its topic.

    Unmatched topics yield no deliveries. Overflow drops the oldest queued frame.
    """
    raw = envelope.encode() if raw is None else raw
    out = []
    for sid in table.match(envelope.topic):
        q = queues.get(sid)
        if q is None:
            continue
        out.append(Delivery(sid, q.put(raw)))
    return out


class Broker:

    def __init__(self, host: str = '127.0.0.1', port: int = DEFAULT_PORT, queue_capacity: int = 1024,
                 max_payload: int = DEFAULT_MAX_PAYLOAD):
        """Initialize the broker (call start() to listen).

        Args:
            host: interface to bind
            port: TCP port; 0 picks a free port (see ``port`` after start())
            queue_capacity: outbound frames buffered per session before drop-oldest
            max_payload: largest payload accepted from a publisher
        """
        self.host = host
        self.port = port
        self.queue_capacity = queue_capacity
        self.max_payload = max_payload
        self.table = TopicTable()
        self.queues: Dict[int, SessionQueue] = {}
        self.conns: Dict[int, socket.socket] = {}
        self.stats = BrokerStats()
        self.lock = threading.Lock()
        self.running = threading.Event()
        self.server: Optional[socket.socket] = None
        self.threads: List[threading.Thread] = []
        self._next_id = 0

    def start(self) -> int:
        self.server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.server.bind((self.host, self.port))
        self.server.listen(64)
        self.server.settimeout(0.2)
        self.port = self.server.getsockname()[1]
        self.running.set()
        t = threading.Thread(target=self._accept_loop, name='broker-accept', daemon=True)
        t.start()
        self.threads.append(t)
        logger.info(f'Broker listening on {self.host}:{self.port}')
        return self.port

    def stop(self) -> None:
        self.running.clear()
        if self.server is not None:
            try:
                self.server.close()
            except OSError:
                pass
        with self.lock:
            sids = list(self.conns)
        for sid in sids:
            self._close_session(sid)
        for t in self.threads:
            t.join(timeout=2.0)
        logger.info(f'Broker stopped: routed={self.stats.routed} delivered={self.stats.delivered} '
                    f'dropped={self.stats.dropped}')

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()

    def _accept_loop(self) -> None:
        while self.running.is_set():
            try:
                conn, addr = self.server.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn.settimeout(None)
            with self.lock:
                sid = self._next_id
                self._next_id += 1
                self.conns[sid] = conn
                self.queues[sid] = SessionQueue(self.queue_capacity)
                self.stats.sessions_opened += 1
            logger.info(f'Session {sid} opened from {addr[0]}:{addr[1]}')
            for target, name in ((self._reader, 'reader'), (self._writer, 'writer')):
                t = threading.Thread(target=target, args=(sid,), name=f'broker-{name}-{sid}', daemon=True)
                t.start()
                self.threads.append(t)

    def _reader(self, sid: int) -> None:
        conn = self.conns[sid]
        decoder = FrameDecoder(self.max_payload)
        try:
            while self.running.is_set():
                data = conn.recv(65536)
                if not data:
                    break
                for env, raw in decoder.feed(data):
                    self._handle(sid, env, raw)
        except BusError as e:
            with self.lock:
                self.stats.protocol_errors += 1
            logger.warning(f'Session {sid} sent an invalid frame, closing: {e}')
        except OSError as e:
            logger.debug(f'Session {sid} read ended: {e}')
        finally:
            self._close_session(sid)

    def _handle(self, sid: int, env: Envelope, raw: bytes) -> None:
        if env.is_control:
            pattern = env.payload.decode('utf-8', errors='replace')
            try:
                if env.topic == SUBSCRIBE:
                    self.table.subscribe(pattern, sid)
                    logger.debug(f'Session {sid} subscribed to {pattern}')
                elif env.topic == UNSUBSCRIBE:
                    self.table.unsubscribe(pattern, sid)
            except ValueError as e:
                logger.warning(f'Session {sid}: {e}')
            return
        deliveries = broker_route(self.table, self.queues, env, raw)
        with self.lock:
            self.stats.routed += 1
            if not deliveries:
                self.stats.unmatched += 1
            for d in deliveries:
                self.stats.delivered += 1
                if d.dropped_oldest:
                    self.stats.dropped += 1
                    self.stats.per_session_drops[d.session_id] = self.stats.per_session_drops.get(d.session_id, 0) + 1

    def _writer(self, sid: int) -> None:
        q = self.queues.get(sid)
        conn = self.conns.get(sid)
        if q is None or conn is None:
            return
        while True:
            raw = q.get(timeout=0.5)
            if raw is None:
                if q.closed:
                    break
                continue
            try:
                conn.sendall(raw)
            except OSError:
                break
        self._close_session(sid)

    def _close_session(self, sid: int) -> None:
        with self.lock:
            conn = self.conns.pop(sid, None)
            q = self.queues.pop(sid, None)
        if conn is None:
            return
        self.table.remove(sid)
        if q is not None:
            q.close()
            if q.dropped:
                logger.warning(f'Session {sid} closed after {q.dropped} drop-oldest events')
        try:
            conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        conn.close()
        logger.info(f'Session {sid} closed')

    def session_count(self) -> int:
        with self.lock:
            return len(self.conns)

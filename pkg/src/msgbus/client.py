"""
Client session: connect, subscribe, publish, receive, reconnect.

Delivery is at-most-once. While disconnected, publishes are counted as lost
and the session keeps retrying with exponential backoff; on reconnect every
subscription is sent again and per-topic sequence numbers simply continue.
"""
import logging
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional

from .envelope import DEFAULT_MAX_PAYLOAD, FLAG_CONTROL, BusError, Envelope, FrameDecoder, encode_envelope
from .faults import FaultPolicy, FaultyLink, inject_faults
from .topics import SUBSCRIBE, UNSUBSCRIBE, validate_pattern

logger = logging.getLogger(__name__)

CONNECTING = 'connecting'
CONNECTED = 'connected'
DISCONNECTED = 'disconnected'
CLOSED = 'closed'
SYNC_PREFIX = '_sync/'


@dataclass
class ClientStats:
    published: int = 0
    lost_disconnected: int = 0
    received: int = 0
    inbound_dropped: int = 0
    connects: int = 0
    connect_failures: int = 0


class BusClient:
    """Thread-safe bus session.

    Publishing and receiving may happen on different threads; each direction
    should be driven by one thread at a time.
    """

    def __init__(self, host: str = '127.0.0.1', port: int = 7447, subscriptions: Iterable[str] = (),
                 name: str = 'client', queue_capacity: int = 4096, backoff_base: float = 0.1,
                 backoff_cap: float = 5.0, faults: Optional[FaultPolicy] = None,
                 max_payload: int = DEFAULT_MAX_PAYLOAD, clock_ns: Callable[[], int] = time.time_ns):
        self.host = host
        self.port = port
        self.name = name
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.max_payload = max_payload
        self.clock_ns = clock_ns
        self.subscriptions = [validate_pattern(p) for p in subscriptions]
        self.seq: Dict[str, int] = {}
        self.stats = ClientStats()
        self.status = CONNECTING
        self.sock: Optional[socket.socket] = None
        self.send_lock = threading.Lock()
        self.state_cond = threading.Condition()
        self.inbound = deque(maxlen=queue_capacity)
        self.inbound_cond = threading.Condition()
        self.link: FaultyLink = inject_faults(self._send_raw, faults or FaultPolicy())
        self.manager: Optional[threading.Thread] = None
        self._sync_count = 0
        self._sync_waiters: Dict[str, threading.Event] = {}

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> 'BusClient':
        self.manager = threading.Thread(target=self._connection_loop, name=f'bus-{self.name}', daemon=True)
        self.manager.start()
        return self

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()

    def close(self) -> None:
        self.link.flush(timeout=2.0)
        self.link.close()
        with self.state_cond:
            self.status = CLOSED
            self.state_cond.notify_all()
        self._drop_socket()
        with self.inbound_cond:
            self.inbound_cond.notify_all()
        if self.manager is not None:
            self.manager.join(timeout=2.0)
        logger.info(f'{self.name}: closed (published={self.stats.published}, received={self.stats.received}, '
                    f'lost={self.stats.lost_disconnected + self.link.dropped})')

    @property
    def connected(self) -> bool:
        return self.status == CONNECTED

    def wait_connected(self, timeout: float = 5.0) -> bool:
        deadline = time.monotonic() + timeout
        with self.state_cond:
            while self.status != CONNECTED:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or self.status == CLOSED:
                    return False
                self.state_cond.wait(remaining)
        return True

    def _connection_loop(self) -> None:
        delay = self.backoff_base
        while self.status != CLOSED:
            try:
                sock = socket.create_connection((self.host, self.port), timeout=1.0)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                sock.settimeout(None)
            except OSError as e:
                self.stats.connect_failures += 1
                logger.debug(f'{self.name}: connect to {self.host}:{self.port} failed ({e}); retry in {delay:.2f}s')
                with self.state_cond:
                    if self.status == CLOSED:
                        return
                    self.status = CONNECTING if self.stats.connects == 0 else DISCONNECTED
                    self.state_cond.wait(delay)
                delay = min(delay * 2, self.backoff_cap)
                continue

            with self.send_lock:
                self.sock = sock
                try:
                    for pattern in self.subscriptions:
                        sock.sendall(self._control(SUBSCRIBE, pattern))
                except OSError:
                    self.sock = None
                    continue
            delay = self.backoff_base
            self.stats.connects += 1
            with self.state_cond:
                if self.status == CLOSED:
                    break
                self.status = CONNECTED
                self.state_cond.notify_all()
            if self.stats.connects > 1:
                logger.info(f'{self.name}: reconnected to {self.host}:{self.port}')
            else:
                logger.info(f'{self.name}: connected to {self.host}:{self.port}')
            self._read_until_closed(sock)
            self._drop_socket(sock)
            with self.state_cond:
                if self.status != CLOSED:
                    self.status = DISCONNECTED
                    logger.warning(f'{self.name}: connection lost, reconnecting')
                self.state_cond.notify_all()
        self._drop_socket()

    def _read_until_closed(self, sock: socket.socket) -> None:
        decoder = FrameDecoder(self.max_payload)
        try:
            while self.status != CLOSED:
                data = sock.recv(65536)
                if not data:
                    return
                for env, _ in decoder.feed(data):
                    if env.topic.startswith(SYNC_PREFIX):
                        waiter = self._sync_waiters.get(env.topic)
                        if waiter is not None:
                            waiter.set()
                        continue
                    with self.inbound_cond:
                        if len(self.inbound) == self.inbound.maxlen:
                            self.stats.inbound_dropped += 1
                        self.inbound.append(env)
                        self.stats.received += 1
                        self.inbound_cond.notify()
        except BusError as e:
            logger.warning(f'{self.name}: invalid frame from broker: {e}')
        except OSError:
            return

    def _drop_socket(self, sock: Optional[socket.socket] = None) -> None:
        with self.send_lock:
            if sock is not None and sock is not self.sock:
                target = sock
            else:
                target, self.sock = self.sock, None
        if target is None:
            return
        try:
            target.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        target.close()

    # -- publish / subscribe -------------------------------------------------

    def _control(self, topic: str, pattern: str) -> bytes:
        return encode_envelope(topic, 0, self.clock_ns(), pattern.encode('utf-8'), FLAG_CONTROL)

    def _send_raw(self, raw: bytes) -> None:
        with self.send_lock:
            if self.sock is None:
                self.stats.lost_disconnected += 1
                return
            try:
                self.sock.sendall(raw)
            except OSError as e:
                self.stats.lost_disconnected += 1
                logger.debug(f'{self.name}: send failed: {e}')

    def _send_control(self, topic: str, pattern: str) -> None:
        # caller holds send_lock
        if self.sock is None:
            return
        try:
            self.sock.sendall(self._control(topic, pattern))
        except OSError as e:
            logger.debug(f'{self.name}: control frame not sent: {e}')

    def subscribe(self, pattern: str) -> None:
        validate_pattern(pattern)
        with self.send_lock:
            if pattern not in self.subscriptions:
                self.subscriptions.append(pattern)
            self._send_control(SUBSCRIBE, pattern)

    def unsubscribe(self, pattern: str) -> None:
        with self.send_lock:
            if pattern in self.subscriptions:
                self.subscriptions.remove(pattern)
            self._send_control(UNSUBSCRIBE, pattern)

    def sync(self, timeout: float = 5.0) -> bool:
        """Round-trip a private marker through the broker.

        The broker handles a session's frames in order, so once the marker
        comes back every earlier subscribe of this session is in effect.
        """
        if not self.wait_connected(timeout):
            return False
        self._sync_count += 1
        topic = f'{SYNC_PREFIX}{self.name}/{id(self)}/{self._sync_count}'
        with self.send_lock:
            self._send_control(SUBSCRIBE, topic)
        event = threading.Event()
        self._sync_waiters[topic] = event
        with self.send_lock:
            if self.sock is not None:
                try:
                    self.sock.sendall(encode_envelope(topic, 0, self.clock_ns(), b''))
                except OSError:
                    pass
        ok = event.wait(timeout)
        self._sync_waiters.pop(topic, None)
        with self.send_lock:
            self._send_control(UNSUBSCRIBE, topic)
        return ok

    def publish(self, topic: str, payload: bytes = b'', timestamp_ns: Optional[int] = None) -> int:
        """Publish and return the sequence number used (consumed even if the frame is lost)."""
        seq = self.seq.get(topic, 0)
        self.seq[topic] = seq + 1
        raw = encode_envelope(topic, seq, self.clock_ns() if timestamp_ns is None else timestamp_ns, payload)
        self.stats.published += 1
        self.link.send(raw)
        return seq

    # -- receive -------------------------------------------------------------

    def receive(self, timeout: Optional[float] = None) -> Optional[Envelope]:
        """Next inbound envelope, or None after ``timeout`` seconds (None waits until closed)."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self.inbound_cond:
            while not self.inbound:
                if self.status == CLOSED:
                    return None
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return None
                self.inbound_cond.wait(remaining if remaining is not None else 0.5)
            return self.inbound.popleft()

    def receive_nowait(self) -> Optional[Envelope]:
        with self.inbound_cond:
            return self.inbound.popleft() if self.inbound else None

    def drain(self) -> list:
        with self.inbound_cond:
            items = list(self.inbound)
            self.inbound.clear()
            return items

"""
Wire format of the bus.

    offset  size  field
    0       4     magic "PSB1"
    4       1     version (1)
    5       1     flags (bit 0: control frame)
    6       2     topic_len
    8       8     seq
    16      8     timestamp_ns
    24      4     payload_len
    28      n     topic (UTF-8)
    28+n    m     payload
    28+n+m  4     CRC-32/IEEE of every preceding byte

All integers little-endian.
"""
import struct
import zlib
from dataclasses import dataclass
from typing import List, Optional, Tuple

MAGIC = b'PSB1'
VERSION = 1
HEADER = struct.Struct('<4sBBHQQI')
CRC = struct.Struct('<I')
HEADER_SIZE = HEADER.size
MAX_TOPIC_LEN = 256
DEFAULT_MAX_PAYLOAD = 16 * 1024 * 1024
FLAG_CONTROL = 0x01
_U64 = 1 << 64


class BusError(Exception):
    """Base class of bus failures."""


class ProtocolError(BusError):
    """Bytes that can never become a valid envelope."""


class IntegrityError(BusError):
    """CRC mismatch."""


class NeedMoreData(BusError):
    """The buffer holds an incomplete frame; ``needed`` is the full frame length when known."""

    def __init__(self, message: str, needed: Optional[int] = None):
        super().__init__(message)
        self.needed = needed


class EnvelopeTooLarge(ProtocolError, ValueError):
    """Topic or payload beyond the configured limits."""


@dataclass(frozen=True)
class Envelope:
    topic: str
    seq: int
    timestamp_ns: int
    payload: bytes = b''
    flags: int = 0

    @property
    def is_control(self) -> bool:
        return bool(self.flags & FLAG_CONTROL)

    def encode(self) -> bytes:
        return encode_envelope(self.topic, self.seq, self.timestamp_ns, self.payload, self.flags)


def encode_envelope(topic: str, seq: int, timestamp_ns: int, payload: bytes = b'', flags: int = 0) -> bytes:
    topic_b = topic.encode('utf-8')
    if len(topic_b) > MAX_TOPIC_LEN:
        raise EnvelopeTooLarge(f'topic is {len(topic_b)} bytes, limit {MAX_TOPIC_LEN}')
    payload = bytes(payload)
    if len(payload) >= 1 << 32:
        raise EnvelopeTooLarge(f'payload of {len(payload)} bytes does not fit a u32 length')
    if not (0 <= seq < _U64 and 0 <= timestamp_ns < _U64):
        raise ValueError('seq and timestamp_ns must fit in u64')
    if not 0 <= flags < 256:
        raise ValueError(f'flags must fit in u8, got {flags}')
    body = HEADER.pack(MAGIC, VERSION, flags, len(topic_b), seq, timestamp_ns, len(payload)) + topic_b + payload
    return body + CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def frame_length(buf, offset: int = 0, max_payload: int = DEFAULT_MAX_PAYLOAD) -> int:
    """Validate the header at ``offset`` and return the full frame length.

    Raises ProtocolError as soon as the available bytes rule out a valid
    frame, NeedMoreData while they are merely too few.
    """
    avail = len(buf) - offset
    head = bytes(buf[offset:offset + min(avail, 4)])
    if head != MAGIC[:len(head)]:
        raise ProtocolError(f'bad magic {head!r}')
    if avail < HEADER_SIZE:
        raise NeedMoreData(f'header needs {HEADER_SIZE} bytes, have {avail}')
    _, version, _, topic_len, _, _, payload_len = HEADER.unpack_from(buf, offset)
    if version != VERSION:
        raise ProtocolError(f'unsupported version {version}')
    if topic_len > MAX_TOPIC_LEN:
        raise ProtocolError(f'topic_len {topic_len} exceeds {MAX_TOPIC_LEN}')
    if payload_len > max_payload:
        raise EnvelopeTooLarge(f'payload_len {payload_len} exceeds limit {max_payload}')
    return HEADER_SIZE + topic_len + payload_len + CRC.size


def decode_frame(buf, offset: int = 0, max_payload: int = DEFAULT_MAX_PAYLOAD) -> Tuple[Envelope, int]:
    """Decode the frame at ``offset``; returns (envelope, frame length)."""
    total = frame_length(buf, offset, max_payload)
    avail = len(buf) - offset
    if avail < total:
        raise NeedMoreData(f'frame needs {total} bytes, have {avail}', needed=total)
    _, _, flags, topic_len, seq, ts, payload_len = HEADER.unpack_from(buf, offset)
    end = offset + total - CRC.size
    (crc,) = CRC.unpack_from(buf, end)
    if zlib.crc32(bytes(buf[offset:end])) & 0xFFFFFFFF != crc:
        raise IntegrityError(f'CRC mismatch on frame seq={seq}')
    start = offset + HEADER_SIZE
    try:
        topic = bytes(buf[start:start + topic_len]).decode('utf-8')
    except UnicodeDecodeError as e:
        raise ProtocolError(f'topic is not UTF-8: {e}') from e
    payload = bytes(buf[start + topic_len:start + topic_len + payload_len])
    return Envelope(topic, seq, ts, payload, flags), total


def decode_envelope(data, max_payload: int = DEFAULT_MAX_PAYLOAD) -> Envelope:
    """Decode exactly one frame."""
    env, used = decode_frame(data, 0, max_payload)
    if used != len(data):
        raise ProtocolError(f'{len(data) - used} trailing bytes after frame')
    return env


class FrameDecoder:
    """Incremental decoder for a byte stream; keeps partial frames between feeds."""

    def __init__(self, max_payload: int = DEFAULT_MAX_PAYLOAD):
        self.max_payload = max_payload
        self.buffer = bytearray()

    def feed(self, data: bytes) -> List[Tuple[Envelope, bytes]]:
        """Append bytes; return every complete (envelope, raw frame) in order."""
        self.buffer.extend(data)
        out = []
        offset = 0
        while offset < len(self.buffer):
            try:
                env, used = decode_frame(self.buffer, offset, self.max_payload)
            except NeedMoreData:
                break
            out.append((env, bytes(self.buffer[offset:offset + used])))
            offset += used
        del self.buffer[:offset]
        return out

    @property
    def pending(self) -> int:
        return len(self.buffer)

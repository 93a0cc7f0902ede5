"""
Mission log files.

    magic "PSLG" | u8 version | u64 seed | 32-byte SHA-256 scenario digest
    then repeated: u32 length | envelope frame

A log cut short (crash, full disk) is read up to the last complete frame and
reported as truncated.
"""
import logging
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from .envelope import BusError, Envelope, decode_envelope

logger = logging.getLogger(__name__)

LOG_MAGIC = b'PSLG'
LOG_VERSION = 1
LOG_HEADER = struct.Struct('<4sBQ32s')
_LEN = struct.Struct('<I')


class LogFormatError(ValueError):
    """Not a mission log, or an unsupported version."""


@dataclass
class LogContents:
    seed: int
    scenario_digest: str
    envelopes: List[Envelope] = field(default_factory=list)
    truncated: bool = False
    corrupt_frames: int = 0


class LogWriter:
    """Append-only writer; safe to call ``write`` from several threads."""

    def __init__(self, path, seed: int, scenario_digest: str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        digest = bytes.fromhex(scenario_digest) if scenario_digest else bytes(32)
        if len(digest) != 32:
            raise ValueError('scenario digest must be a SHA-256 hex string')
        self.file = open(self.path, 'wb')
        self.file.write(LOG_HEADER.pack(LOG_MAGIC, LOG_VERSION, int(seed) & 0xFFFFFFFFFFFFFFFF, digest))
        self.lock = threading.Lock()
        self.count = 0

    def write(self, frame: bytes) -> None:
        with self.lock:
            self.file.write(_LEN.pack(len(frame)) + frame)
            self.count += 1

    def write_envelope(self, env: Envelope) -> None:
        self.write(env.encode())

    def close(self) -> None:
        with self.lock:
            if not self.file.closed:
                self.file.close()
        logger.info(f'Log {self.path} closed with {self.count} frames')

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path, topic_prefix: Optional[str] = None) -> LogContents:
    data = Path(path).read_bytes()
    if len(data) < LOG_HEADER.size:
        raise LogFormatError(f'{path}: too short for a log header')
    magic, version, seed, digest = LOG_HEADER.unpack_from(data, 0)
    if magic != LOG_MAGIC:
        raise LogFormatError(f'{path}: bad magic {magic!r}')
    if version != LOG_VERSION:
        raise LogFormatError(f'{path}: unsupported log version {version}')
    out = LogContents(seed=seed, scenario_digest=digest.hex())
    offset = LOG_HEADER.size
    while offset < len(data):
        if offset + _LEN.size > len(data):
            out.truncated = True
            break
        (n,) = _LEN.unpack_from(data, offset)
        if offset + _LEN.size + n > len(data):
            out.truncated = True
            break
        frame = data[offset + _LEN.size:offset + _LEN.size + n]
        offset += _LEN.size + n
        try:
            env = decode_envelope(frame)
        except BusError as e:
            out.corrupt_frames += 1
            logger.warning(f'{path}: skipping corrupt frame at byte {offset - n}: {e}')
            continue
        if topic_prefix is None or env.topic.startswith(topic_prefix):
            out.envelopes.append(env)
    if out.truncated:
        logger.warning(f'{path}: log truncated after {len(out.envelopes)} frames')
    return out

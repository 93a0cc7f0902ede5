"""
Seed derivation: every random draw in the stack comes from a generator built
from (seed, stream name, tick), so sensor and filter calls are pure functions.
"""
import zlib

import numpy as np


def stream_id(name: str) -> int:
    return zlib.crc32(name.encode('utf-8'))


def derive_rng(seed: int, stream: str, *keys: int) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, stream_id(stream)]
    entropy.extend(int(k) & 0xFFFFFFFFFFFFFFFF for k in keys)
    return np.random.default_rng(entropy)


def tick_of(t: float, resolution: float = 1e-3) -> int:
    """Integer key for a sim time (milliseconds by default)"""
    return int(round(t / resolution))

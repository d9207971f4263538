"""Named, reproducible random streams.

A stream is identified by a 64-bit seed plus a path of keys (ints or
strings).  Strings are folded to integers with CRC-32 so the mapping does
not depend on Python's randomized ``hash``.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("stream keys must be non-negative")
        return int(k)
    return zlib.crc32(str(k).encode("utf-8"))


def stream(seed: int, *keys) -> np.random.Generator:
    """PCG64 generator for ``(seed, *keys)``; identical keys give identical draws."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(seed: int, *keys) -> int:
    """Derive a 63-bit seed for a sub-computation, independent of call order."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))

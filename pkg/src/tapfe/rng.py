"""Counter-based random streams.

Every stream is a Philox generator keyed by a SeedSequence built from the
user seed plus integer labels, so a stream for (seed, batch) never depends
on how many other streams were drawn before it.
"""
import zlib

import numpy as np


def _label(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key)


def stream(seed: int, *keys) -> np.random.Generator:
    """Return an independent generator for ``(seed, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_label(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

"""Seed handling.

All randomness in the package (parameter init, shuffling, synthetic data)
flows from one root integer seed through numpy's PCG64 generator, which has
a documented, platform-independent algorithm. Independent substreams are
derived by hashing the root seed together with string/integer keys via
``SeedSequence``, so adding a consumer never perturbs existing streams.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


def substream(root_seed: int, *keys) -> np.random.Generator:
    """Generator for the substream identified by (root_seed, *keys)."""
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

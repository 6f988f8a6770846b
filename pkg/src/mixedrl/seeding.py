"""Counter-based splitting of a master seed into independent streams.

``derive_rng(master, "train", n, m, seed)`` hands the key tuple to
``numpy.random.SeedSequence`` as its spawn key. Streams depend only on
(master, keys), so adding evaluation episodes or sweep cells never shifts
the randomness of any other component.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, (bool, np.bool_)):
        return int(k)
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("integer stream keys must be non-negative")
        return int(k)
    return zlib.crc32(str(k).encode())


def seed_sequence(master: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=tuple(_key(k) for k in keys))


def derive_rng(master: int, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(master, *keys)))

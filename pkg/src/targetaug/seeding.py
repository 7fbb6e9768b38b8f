"""Deterministic RNG substreams.

Every random decision in the pipeline draws from a ``random.Random`` whose seed
is derived from the master seed plus a path of keys (epoch, input index, ...).
Results therefore do not depend on how work is split across processes.
"""

from __future__ import annotations

import random
import zlib

import numpy as np


def _key_int(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"seed keys must be non-negative, got {key}")
    return int(key)


def derive_seed(master: int, *keys: int | str) -> int:
    """Return a 64-bit seed for the substream ``master/keys...``."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(_key_int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def substream(master: int, *keys: int | str) -> random.Random:
    return random.Random(derive_seed(master, *keys))

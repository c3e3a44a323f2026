"""Named sub-seed derivation.

Every random decision in a run flows from one base seed through a named
stream (data, init, shuffle, augment, kmeans, probe, ...). Streams with
different names never share draws, so enabling or disabling one component
cannot perturb the randomness of another. Tags are hashed with CRC-32,
which is stable across platforms and interpreter runs.
"""

from __future__ import annotations

import zlib

import numpy as np


def tag_int(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def sub_seed(seed: int, tag: str, *extra: int) -> int:
    """Derive a deterministic child seed from (seed, tag, extra ints)."""
    ss = np.random.SeedSequence([int(seed), tag_int(tag), *[int(e) for e in extra]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_for(seed: int, tag: str, *extra: int) -> np.random.Generator:
    """Generator for the named stream."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), tag_int(tag), *[int(e) for e in extra]])
    )

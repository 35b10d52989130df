"""Deterministic random streams.

Every consumer of randomness (parameter init, data order, dropout masks,
augmentation, synthetic images) draws from its own named stream so that
changing one consumer never perturbs another.  A stream is a PCG64
generator seeded from ``SeedSequence(seed, spawn_key=(crc32(name), *keys))``.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed: int, stream: str, *keys: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, stream, *keys)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream_id(stream), *map(int, keys)))
    return np.random.Generator(np.random.PCG64(ss))

"""Seeded, counter-based random streams.

Every random object in the package draws from a Philox generator keyed by
``(seed, name...)``, so a sketch or a delay sample is reproducible from its
seed and a stable instance label, independent of call order.
"""
from __future__ import annotations

import zlib

import numpy as np


def _name_key(name) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFF
    return zlib.crc32(str(name).encode("utf-8"))


def substream(seed, *names) -> np.random.Generator:
    """Return an independent generator for the named substream of ``seed``.

    An existing ``Generator`` is passed through untouched so callers that
    manage their own stream can thread it along.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = 0
    if int(seed) < 0:
        raise ValueError("seed must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_name_key(n) for n in names))
    return np.random.Generator(np.random.Philox(ss))

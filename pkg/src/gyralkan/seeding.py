"""Counter-based seed derivation so every component draws from its own stream."""

import zlib

import numpy as np


def derive_rng(seed: int, component: str, *counters: int) -> np.random.Generator:
    tag = zlib.crc32(component.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag, *map(int, counters)]))

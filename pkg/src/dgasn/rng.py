"""Named random streams derived from one integer seed.

Each consumer asks for its stream by name, so adding a new consumer never
shifts the draws seen by existing ones.
"""
import zlib

import numpy as np


def stream(seed, name):
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, key]))

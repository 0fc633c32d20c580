"""Named random sub-streams derived from a single seed."""

import zlib

import numpy as np

STREAMS = ("split", "init", "batch", "synth", "gradcheck")


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; same (seed, name) -> same stream."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng([int(seed), key])

"""Named random streams derived from one user seed."""
import zlib

import numpy as np


def derive_rng(seed: int, *names) -> np.random.Generator:
    """Independent generator for ``(seed, *names)``; stable across runs and platforms."""
    key = [zlib.crc32(str(n).encode()) for n in names]
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))

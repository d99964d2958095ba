"""Named random streams derived from one master seed.

Every source of randomness in the engine (weight init, shuffling, corpus
synthesis, ...) pulls its own generator from `stream`. Adding or removing
one consumer never shifts the draws seen by the others, and the same
(seed, name) pair always yields the same stream on any platform.
"""

import hashlib

import numpy as np


def stream_seed(master_seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(master_seed: int, name: str) -> np.random.Generator:
    """Return the dedicated generator for one named consumer."""
    return np.random.default_rng(stream_seed(master_seed, name))

"""Named deterministic random sub-streams derived from one global seed.

Every stochastic stage (data sampling, weight init, pair sampling, restart
noise) draws from its own named stream so that adding or reordering stages
never shifts the randomness seen by the others.
"""
from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for the sub-stream ``name`` under the global ``seed``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    salt = int.from_bytes(digest, "little")
    return np.random.default_rng(np.random.SeedSequence([seed, salt]))

"""Seeded random streams.

Every stream is a Philox counter-based generator keyed by a run seed and a
tuple of non-negative integers (``spawn_key``), so a stream can be
regenerated independently of the order in which other streams are drawn.
"""
import numpy as np


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for ``(seed, key...)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))

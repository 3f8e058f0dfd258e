"""Keyed random streams.

Every random draw in the package comes from a generator obtained with
``KeyedRng.stream(*key)``.  The stream for a key depends only on the root
seed and the key, so work can be split over workers (or re-run for a single
group) without changing any draw.
"""

from __future__ import annotations

import hashlib

import numpy as np

# task kinds used as the first key component
POSTERIOR = 1
GROUP = 2
GLOBAL = 3
TIES = 4
SIMULATION = 5
PHENOTYPE = 6
FOLDS = 7
MODIFIED = 8
PERMUTATION = 9


def _key_word(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream key components must be non-negative")
        return int(part)
    digest = hashlib.blake2b(str(part).encode(), digest_size=4).digest()
    return int.from_bytes(digest, "little")


class KeyedRng:
    """Root of a family of independent counter-based (Philox) streams."""

    def __init__(self, seed: int | None = None):
        if seed is None:
            seed = int(np.random.SeedSequence().entropy % (2**63))
        self.seed = int(seed)

    def stream(self, *key) -> np.random.Generator:
        words = tuple(_key_word(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=words)
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *key) -> "KeyedRng":
        """A new root whose seed is drawn from ``stream(*key)``."""
        return KeyedRng(int(self.stream(*key).integers(0, 2**63)))

    def __repr__(self) -> str:
        return f"KeyedRng(seed={self.seed})"


def as_keyed(rng) -> KeyedRng:
    """Accept a KeyedRng, an int seed, a numpy Generator or None."""
    if isinstance(rng, KeyedRng):
        return rng
    if isinstance(rng, np.random.Generator):
        return KeyedRng(int(rng.integers(0, 2**63)))
    return KeyedRng(rng)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, KeyedRng):
        return rng.stream(0)
    return np.random.default_rng(rng)

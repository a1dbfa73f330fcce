"""Deterministic seeding.

Sub-seeds are derived by hashing ``(parent seed, purpose label)`` so that
adding a new consumer never shifts the stream seen by an existing one.
Streams come from numpy's counter-based Philox generator, which yields the
same numbers on every platform.
"""

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.blake2b(f"{int(seed) & SEED_MASK}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def generator(seed: int, label: str | None = None) -> np.random.Generator:
    if label is not None:
        seed = derive_seed(seed, label)
    return np.random.Generator(np.random.Philox(key=int(seed) & SEED_MASK))


def uniform_init(seed: int, label: str, shape, fan_in: int) -> np.ndarray:
    """Uniform draw in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``."""
    bound = 1.0 / np.sqrt(fan_in)
    return generator(seed, label).uniform(-bound, bound, size=shape)

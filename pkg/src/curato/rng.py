"""Deterministic random streams and content hashing.

Every stochastic operation in the package draws from a generator obtained
via seeded(seed, *tags). The tags partition the seed into independent
streams (shuffling, initialization, embedding init, ...) so that adding a
new consumer never perturbs existing streams. PCG64 is a named, seedable
generator with a platform-independent stream, which is exactly the
portability contract the determinism guarantees rely on.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash. Integrity check, not cryptographic."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def seeded(seed: int, *tags: str | int) -> np.random.Generator:
    """Generator for the stream identified by (seed, tags).

    Same (seed, tags) yields the same stream on every platform; distinct
    tags yield statistically independent streams.
    """
    key = tuple(fnv1a64(str(t).encode("utf-8")) & 0xFFFFFFFF for t in tags)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=key)))

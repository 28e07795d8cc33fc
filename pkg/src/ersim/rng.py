"""Named, seed-derived random streams.

Every stochastic step draws from its own stream so results do not depend on
call order or on how work is split across workers.
"""

import hashlib

import numpy as np


def _words(data: bytes) -> list:
    digest = hashlib.blake2b(data, digest_size=16).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def stream(seed: int, tag: str) -> np.random.Generator:
    """Independent generator for a named pipeline stage."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *_words(tag.encode())])))


def leaf_stream(seed: int, key: bytes) -> np.random.Generator:
    """Generator for one tree leaf, keyed by its canonical byte string."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x1EAF, *_words(bytes(key))]))
    )

"""Deterministic RNG streams derived from a master seed."""

import zlib

import numpy as np


def _word(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key)


def rng_for(master: int, *keys) -> np.random.Generator:
    """Independent generator for ``(master, *keys)``.

    String keys name the stream ("shuffle", "duration", ...); integer keys
    are client ids, rounds and so on.  Platform independent.
    """
    return np.random.default_rng(np.random.SeedSequence([_word(master), *map(_word, keys)]))


def derive_seed(master: int, *keys) -> int:
    """A 32-bit integer seed for APIs that take plain ints."""
    ss = np.random.SeedSequence([_word(master), *map(_word, keys)])
    return int(ss.generate_state(1)[0])

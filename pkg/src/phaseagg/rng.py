"""Keyed, counter-based randomness derivation.

Every random quantity in a simulation is a pure function of a key tuple
(scenario seed, domain tag, round index, ids...).  Keys are hashed through
numpy's SeedSequence, which is a fixed avalanche mix of the key words, so
any single value - e.g. the channel phase of one pair at one iteration -
can be re-derived on demand without storing anything.  Dropout recovery
and transcript replay rely on this.

Domain tags keep the independent streams (channel phases, private phases,
grouping, data, dropouts) from ever colliding on the same key.
"""

from __future__ import annotations

import numpy as np

CHANNEL_DOMAIN = 1
PRIVATE_PHASE_DOMAIN = 2
GROUPING_DOMAIN = 3
DATA_DOMAIN = 4
DROPOUT_DOMAIN = 5
CHANNEL_STREAM_DOMAIN = 6
PRIVATE_STREAM_DOMAIN = 7


def _check_key(key: tuple) -> list[int]:
    parts = []
    for part in key:
        part = int(part)
        if part < 0:
            raise ValueError(f"key parts must be non-negative, got {part} in {key}")
        parts.append(part)
    return parts


def keyed_turn(*key: int) -> int:
    """One uniform value on the 2**32 grid, derived from the key."""
    ss = np.random.SeedSequence(entropy=_check_key(key))
    return int(ss.generate_state(1, np.uint32)[0])


def keyed_turn_vector(length: int, *key: int) -> np.ndarray:
    """A vector of `length` uniform grid values derived from the key."""
    ss = np.random.SeedSequence(entropy=_check_key(key))
    return ss.generate_state(length, np.uint32).astype(np.uint64)


def keyed_generator(*key: int) -> np.random.Generator:
    """A full Generator for shuffles / floats, keyed like keyed_turn."""
    return np.random.default_rng(np.random.SeedSequence(entropy=_check_key(key)))

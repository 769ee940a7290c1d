"""Deterministic, splittable random streams.

Every stochastic component owns a numpy Generator derived from a 64-bit
seed plus a tuple of string labels.  Derivation hashes the labels, so the
stream for (seed, "oracle", "tpa") is stable across runs and platforms
and independent of the stream for any other label path.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def seed_sequence(seed: int, *labels: str) -> np.random.SeedSequence:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for label in labels:
        entropy.extend(_label_words(label))
    return np.random.SeedSequence(entropy)


def make_rng(seed: int, *labels: str) -> np.random.Generator:
    """Independent PCG64 stream for this (seed, labels...) path."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *labels)))

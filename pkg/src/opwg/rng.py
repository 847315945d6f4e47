"""Deterministic named RNG substreams derived from one master seed."""

import hashlib

import numpy as np


def _label_entropy(label) -> int:
    digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *labels) -> np.random.Generator:
    """Return a generator seeded by ``seed`` and a sequence of stream labels.

    Different label paths give statistically independent streams; the same
    (seed, labels) pair always yields the same stream, independent of platform.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    entropy = [int(seed)] + [_label_entropy(lbl) for lbl in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *labels) -> int:
    """Deterministic integer sub-seed for the given label path."""
    return int(substream(seed, *labels).integers(0, 2**31 - 1))

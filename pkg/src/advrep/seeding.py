"""Deterministic RNG derivation.

Every random draw in a run flows from one integer seed. Sub-streams are
derived from (seed, label...) tuples so that stages and per-sample work
can be re-run in isolation, in any order, with identical results.
"""

from __future__ import annotations

import zlib

import numpy as np


def _as_entropy(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def spawn_rng(seed: int, *labels) -> np.random.Generator:
    """Generator for the sub-stream identified by (seed, *labels)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_as_entropy(p) for p in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def per_sample_rng(seed: int, sample_index: int) -> np.random.Generator:
    """Per-sample stream: serial and parallel explanation runs agree."""
    return spawn_rng(seed, "sample", sample_index)

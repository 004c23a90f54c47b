"""Deterministic sub-seed derivation.

Every random draw in the pipeline (crop offsets, epoch shuffles, weight
initialization, synthetic data) is derived from one root seed plus a stable
purpose tag, so each stage is independently reproducible no matter which
other stages ran before it.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode("utf-8"))


def subseed(root: int, *tags) -> np.random.SeedSequence:
    """Seed sequence for a named sub-stream of the root seed."""
    return np.random.SeedSequence(int(root), spawn_key=tuple(_tag_to_int(t) for t in tags))


def rng_for(root: int, *tags) -> np.random.Generator:
    """Generator for a named sub-stream of the root seed."""
    return np.random.default_rng(subseed(root, *tags))

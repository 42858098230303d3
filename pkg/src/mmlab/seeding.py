"""Deterministic per-module RNG substreams.

All randomness in a run flows from one global seed.  Each consumer asks for a
named substream; the name is hashed into the seed material so one module
drawing more (or fewer) samples never perturbs another module's stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for (seed, name)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, *words]))

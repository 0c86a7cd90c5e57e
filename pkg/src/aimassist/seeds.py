"""Deterministic RNG stream derivation.

Every random draw in the package flows from one 64-bit master seed.
Subsystems get independent streams via `split`, keyed by small ints or
stable string tags (crc32, never Python's randomized hash()).
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _encode(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8")) & 0xFFFFFFFF
    return int(part) & _MASK64


def split(master_seed: int, *parts) -> np.random.Generator:
    """Derive an independent Generator from the master seed and a key path.

    split(s, "trials", 17) and split(s, "trials", 18) are statistically
    independent streams; the same arguments always give the same stream.
    """
    entropy = [int(master_seed) & _MASK64] + [_encode(p) for p in parts]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def trial_seed_sequence(master_seed: int, n: int) -> list[int]:
    """Per-trial child seeds, stable regardless of execution order."""
    rng = split(master_seed, "trial-seeds")
    return [int(x) for x in rng.integers(0, 2**63 - 1, size=n)]

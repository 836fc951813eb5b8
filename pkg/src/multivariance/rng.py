"""Seeded random streams.

All randomness goes through numpy's Philox counter-based generator, so a
given 64-bit seed reproduces the same draws on every platform. Independent
substreams (one per replication or worker) come from ``SeedSequence.spawn``.
"""
from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "spawn", "resolve_seed"]


def resolve_seed(seed) -> int:
    """Return ``seed`` as an int, drawing a fresh 64-bit seed when it is None."""
    if seed is None:
        return int(np.random.SeedSequence().generate_state(1, np.uint64)[0])
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(resolve_seed(seed))))


def spawn(seed, count: int) -> list[np.random.Generator]:
    """``count`` independent generators derived deterministically from ``seed``."""
    root = np.random.SeedSequence(resolve_seed(seed))
    return [np.random.Generator(np.random.Philox(s)) for s in root.spawn(count)]

"""Deterministic seed derivation and cheap stateless hashing.

Every randomized stage of an experiment draws its own child seed from
(master_seed, label), so adding a new stage never shifts the randomness
consumed by existing ones.
"""
from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, label: str) -> int:
    """Child seed for a named experiment stage. Stable across processes."""
    digest = hashlib.blake2b(
        f"{master_seed}:{label}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def mix64(*parts: int) -> int:
    """Stateless 64-bit mix of integer keys (splitmix64 finalizer per part).

    Used for per-(link, tx) latency draws: the value depends only on the
    keys, never on event processing order. Not cryptographic.
    """
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h ^ (p & _MASK64)) * 0xBF58476D1CE4E5B9 & _MASK64
        h = (h ^ (h >> 27)) * 0x94D049BB133111EB & _MASK64
        h ^= h >> 31
    return h


def unit_float(*parts: int) -> float:
    """Deterministic uniform draw in [0, 1) keyed by the given integers."""
    return mix64(*parts) / float(1 << 64)

"""Counter-based randomness for the generators.

Every random quantity is a pure function of ``(seed, name parts...)`` via
blake2b, so a record is addressable by its timestamp alone: regenerating
any sample never depends on how many draws happened before it.  That is
what makes whole runs byte-identical for a given seed regardless of
producer interleaving.
"""

from __future__ import annotations

import hashlib


def _digest(*parts: object) -> int:
    key = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def unit_hash(*parts: object) -> float:
    """Uniform float in [0, 1) derived from the given parts."""
    return _digest(*parts) / 2.0**64


def int_hash(n: int, *parts: object) -> int:
    """Uniform int in [0, n) derived from the given parts."""
    if n <= 0:
        raise ValueError("n must be positive")
    return _digest(*parts) % n

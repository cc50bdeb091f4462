"""Deterministic seed derivation for independent random streams."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *parts: int | str) -> int:
    """Derive a child seed from a master seed and a key path.

    Children for distinct key paths are statistically independent, and the
    derivation is stable across platforms and runs.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for part in parts:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "big")


def rng_for(master: int, *parts: int | str) -> np.random.Generator:
    """Generator seeded by `derive_seed(master, *parts)`."""
    return np.random.default_rng(derive_seed(master, *parts))

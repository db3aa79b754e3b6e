"""Deterministic RNG derivation.

Every random stream in the simulator is a `numpy` Generator derived from a
tuple of tokens (seed integers plus string tags).  Derivations are stable
across processes and interpreter sessions: strings are folded through
SHA-256, never the builtin `hash`.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _token_words(token: int | str) -> list[int]:
    if isinstance(token, str):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 8, 4)]
    return [token & 0xFFFFFFFF, (token >> 32) & 0xFFFFFFFF]


def seed_sequence(*tokens: int | str) -> np.random.SeedSequence:
    words: list[int] = []
    for token in tokens:
        words.extend(_token_words(token))
    return np.random.SeedSequence(words)


def rng_for(*tokens: int | str) -> np.random.Generator:
    """Generator uniquely determined by the token tuple."""
    return np.random.default_rng(seed_sequence(*tokens))

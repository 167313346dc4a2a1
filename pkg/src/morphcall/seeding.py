"""Deterministic RNG stream derivation.

Every random choice in the pipeline flows from a single 64-bit config seed.
Sub-streams are derived by hashing the seed together with a purpose tag
(e.g. a sentence id), so generation order and parallelism cannot change
the outcome and results are stable across platforms.
"""

import hashlib
import random


def derive_seed(seed: int, *tags: str) -> int:
    payload = (str(seed) + "\x1f" + "\x1f".join(tags)).encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def derive_rng(seed: int, *tags: str) -> random.Random:
    return random.Random(derive_seed(seed, *tags))

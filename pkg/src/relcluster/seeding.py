"""Stable seed derivation for parallel-safe, reproducible randomness.

Derived seeds depend only on the argument values (via SHA-256), never on
Python's salted ``hash``, so streams are identical across processes and
machines.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(*parts) -> int:
    """Map an arbitrary tuple of parts to a stable 63-bit seed."""
    payload = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def derive_random(*parts) -> random.Random:
    """A stdlib Random stream keyed by the given parts.

    Mining uses stdlib randomness because its sequences are stable across
    interpreter and library versions, which keeps committed pair dumps
    byte-reproducible.
    """
    return random.Random(derive_seed(*parts))

"""Stable seed derivation for nested random streams.

Python's builtin hash() is salted per process, so derived seeds go through
SHA-256 instead; the same (master, tags) pair yields the same child seed on
every platform and run.
"""

from __future__ import annotations

import hashlib

__all__ = ["derive_seed"]


def derive_seed(master: int, *tags) -> int:
    text = repr((int(master),) + tuple(tags)).encode("utf-8")
    digest = hashlib.sha256(text).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 63)

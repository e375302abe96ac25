"""Labeled sub-seed derivation for reproducible random streams.

Every random draw in the package flows from one master seed. Independent
concerns (entity placement, link sampling, arrivals, policy draws, path
noise) each derive their own sub-seed by hashing the master seed together
with string labels, so adding or reordering one consumer never shifts the
streams seen by the others. Python's builtin ``hash`` is salted per process
and therefore unusable here; blake2b is stable.
"""

from __future__ import annotations

import hashlib
import random

_SEED_BYTES = 8


def derive_seed(master: int, *labels: object) -> int:
    """Derive a 64-bit sub-seed from a master seed and a label path."""
    h = hashlib.blake2b(digest_size=_SEED_BYTES)
    h.update(str(int(master)).encode("utf-8"))
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "big")


def rng_for(master: int, *labels: object) -> random.Random:
    """Fresh ``random.Random`` seeded from :func:`derive_seed`."""
    return random.Random(derive_seed(master, *labels))

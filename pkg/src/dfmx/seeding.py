"""Derived seeds: one global seed fans out into independent per-purpose streams.

``derive_seed(seed, "shuffle", epoch)`` hashes the decimal rendering of its
arguments joined by ``/`` with SHA-256 and keeps the first 8 bytes
(little-endian, top bit cleared). Re-running any stage in isolation with the
same global seed reproduces its stream exactly.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *keys: object) -> int:
    text = "/".join([str(int(seed))] + [str(k) for k in keys])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


def rng(seed: int, *keys: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))

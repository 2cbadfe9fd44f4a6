"""Deterministic seed derivation for sweep cells.

Every parallel cell (seed, method, keep, ...) gets its own Generator whose
seed is a stable hash of the master seed plus the cell labels, so results
do not depend on scheduling order or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *parts) -> int:
    """Map (master, *parts) to a stable 64-bit seed via sha256."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for part in parts:
        h.update(b"\x1f")
        if isinstance(part, float):
            part = repr(part)
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "big") & _MASK64


def make_rng(master: int, *parts) -> np.random.Generator:
    """Generator seeded by derive_seed(master, *parts)."""
    return np.random.default_rng(derive_seed(master, *parts))

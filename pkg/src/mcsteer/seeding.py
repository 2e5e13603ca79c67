"""Deterministic seed derivation.

Every random decision in the package is keyed off a single run seed plus a
few context components (a purpose string, layer index, pass index, ...).
Hashing the components with SHA-256 gives a stable 64-bit stream seed that
does not depend on platform, process, or insertion order tricks the way
``hash()`` does.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*components: int | str) -> int:
    """Mix integer and string components into a 64-bit seed.

    The mapping is injective over the component tuple: each component is
    tagged with its type and length before hashing, so ("ab", "c") and
    ("a", "bc") derive different seeds.
    """
    h = hashlib.sha256()
    for part in components:
        if isinstance(part, (bool, float)):
            raise TypeError(f"seed components must be int or str, got {type(part).__name__}")
        if isinstance(part, (int, np.integer)):
            h.update(b"i")
            h.update(int(part).to_bytes(16, "little", signed=True))
        elif isinstance(part, str):
            raw = part.encode("utf-8")
            h.update(b"s")
            h.update(len(raw).to_bytes(8, "little"))
            h.update(raw)
        else:
            raise TypeError(f"seed components must be int or str, got {type(part).__name__}")
    return int.from_bytes(h.digest()[:8], "little")


def rng_from(*components: int | str) -> np.random.Generator:
    """Generator seeded by :func:`derive_seed` of the components."""
    return np.random.default_rng(derive_seed(*components))

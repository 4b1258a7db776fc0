"""Seeded random streams.

All randomness goes through PCG64 generators derived from a base seed and a
named purpose.  Distinct purposes map to distinct ``SeedSequence`` spawn keys,
so e.g. the data stream and the bootstrap permutation never share draws.
"""

from __future__ import annotations

import numpy as np

# Fixed tags; changing these changes every generated stream.
_PURPOSES = {
    "stream": 1,
    "bootstrap": 2,
    "policy": 3,
    "detector": 4,
}


def substream(seed: int, purpose: str) -> np.random.Generator:
    """Return an independent PCG64 generator for ``(seed, purpose)``."""
    try:
        tag = _PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown RNG purpose {purpose!r}") from None
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(tag,))
    return np.random.Generator(np.random.PCG64(ss))

"""Seeded random streams.

All randomness in the toolkit flows through named Philox streams so that every
result is a pure function of the user-facing seed. Philox is counter-based,
which keeps the streams independent of processing order and of each other.

Stream layout (documented so results can be reproduced outside this package):

* ``stream(seed, STREAM_PAIRS, probe_index)`` -- impostor sampling for one probe
* ``stream(seed, STREAM_DATA)``               -- synthetic dataset generation
* ``stream(seed, STREAM_LAYER)``              -- synthetic last-layer weights
* ``stream(seed, STREAM_CV)``                 -- cross-validation fold shuffle
* ``stream(image_seed(seed, image_id))``      -- per-image dropout masks

Gaussian draws use ``numpy.random.Generator.standard_normal`` on these
streams. Bit-exact reproduction therefore requires numpy's Philox/ziggurat
implementation; cross-library reproduction is only expected at the level of
statistical assertions.
"""

from __future__ import annotations

import hashlib

import numpy as np

STREAM_PAIRS = 1
STREAM_DATA = 2
STREAM_LAYER = 3
STREAM_CV = 4

_U64 = (1 << 64) - 1


def stream(*keys: int) -> np.random.Generator:
    """Deterministic generator for a tuple of integer keys."""
    entropy = [int(k) & _U64 for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def image_seed(seed: int, image_id: str) -> int:
    """Stable 64-bit sub-seed for one image, independent of row order.

    blake2b over the little-endian seed bytes followed by the UTF-8 image id;
    Python's builtin ``hash`` is process-salted and must not be used here.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update((int(seed) & _U64).to_bytes(8, "little"))
    h.update(image_id.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")

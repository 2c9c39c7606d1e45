"""
Project-wide random number generation.

All randomness goes through numpy's PCG64 bit generator. A run has one
integer seed; each seeded component receives a sub-seed derived from that
seed and a stable name (its object path in the experiment), so adding a
component never perturbs the streams of the others.
"""

import zlib

import numpy as np

DEFAULT_SEED = 0


def make_rng(seed=None) -> np.random.Generator:
    """A PCG64 generator. ``None`` falls back to :data:`DEFAULT_SEED`."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(
        DEFAULT_SEED if seed is None else int(seed)))


def derive_seed(seed: int, name: str) -> int:
    """Split ``seed`` into an independent 63-bit sub-seed for ``name``.

    The split hashes ``name`` with CRC-32 and feeds ``(seed, crc)`` to
    numpy's ``SeedSequence``, which is stable across platforms.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF,
                                 zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))

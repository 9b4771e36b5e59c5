"""Deterministic seed derivation and per-trajectory noise streams.

Every random quantity in the library is derived from a single master seed
through the fixed 64-bit mixing function below, so results are reproducible
bit-for-bit regardless of execution order or how work is distributed across
workers.

Stream contract
---------------
A trajectory with sub-seed ``s`` owns two independent substreams:

* ``gauss``  -- seeded with ``mix64_chain(s, 1)``; supplies all Gaussian
  draws, consumed in step order (``kernel.gauss_per_step`` values per step).
* ``unif``   -- seeded with ``mix64_chain(s, 2)``; supplies all uniform
  draws, one block per step (``kernel.unif_per_step`` values per step).

Because each substream is a homogeneous sequence of one distribution,
NumPy's generators return identical values no matter how draws are chunked,
which lets the simulator pre-draw noise in blocks while staying bit-equal
to a step-by-step run.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finalizer; bijective mixing of a 64-bit value."""
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed: int, *indices: int) -> int:
    """Derive a sub-seed from ``seed`` and a path of integer indices.

    Chained as ``mix64(mix64(seed) ^ mix64(index + 1))`` per level, so
    distinct index paths give independent sub-seeds and the scheme can be
    reproduced from this description alone.
    """
    z = mix64(seed & _MASK)
    for idx in indices:
        z = mix64(z ^ mix64((idx + 1) & _MASK))
    return z


class TrajectoryStreams:
    """The pair of noise substreams owned by one simulated trajectory."""

    __slots__ = ("gauss", "unif")

    def __init__(self, gauss: np.random.Generator, unif: np.random.Generator):
        self.gauss = gauss
        self.unif = unif

    @classmethod
    def from_seed(cls, seed: int) -> "TrajectoryStreams":
        return cls(
            gauss=np.random.Generator(np.random.PCG64(derive_seed(seed, 1))),
            unif=np.random.Generator(np.random.PCG64(derive_seed(seed, 2))),
        )


def generator(seed: int) -> np.random.Generator:
    """A plain generator for non-trajectory randomness (shuffles, inits...)."""
    return np.random.Generator(np.random.PCG64(seed & _MASK))

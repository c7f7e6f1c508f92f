"""Deterministic random-stream derivation from a single master seed.

Every stochastic component of the package draws from a substream addressed
by a (seed, key...) tuple.  The mapping is fixed, so a given substream is
identical no matter how many other substreams exist or in which order they
are consumed -- the basis for worker-count-independent Monte Carlo runs.
"""

from __future__ import annotations

import numpy as np

# Logical stream identifiers (first component of the substream key).
STREAM_TEXTURE = 1
STREAM_GAUSS = 2
STREAM_ASYMPTOTICS = 3
STREAM_PSEUDO_TRUE = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for the substream addressed by ``key``.

    The same (seed, key) pair always yields the same stream.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng: int | np.random.Generator) -> np.random.Generator:
    """Accept either a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return substream(int(rng))

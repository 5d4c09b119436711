"""Seeded counter-based random streams.

Every stochastic operation in the toolkit draws from a Philox stream keyed by
an explicit 64-bit seed plus an optional tuple of integer stream ids, so work
items can be generated in any order (or in parallel) with identical results.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed, *stream):
    """Return a ``numpy.random.Generator`` backed by Philox.

    ``seed`` and every element of ``stream`` must be non-negative integers.
    """
    words = [int(seed) & _MASK64] + [int(s) & _MASK64 for s in stream]
    ss = np.random.SeedSequence(words)
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *stream):
    """Derive a child 64-bit seed from ``seed`` and ``stream`` ids."""
    words = [int(seed) & _MASK64] + [int(s) & _MASK64 for s in stream]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


def complex_normal(rng, shape, sigma):
    """Circular complex Gaussian samples with per-component std ``sigma``."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return sigma * (re + 1j * im)

"""Seeded random streams.

Every stochastic component draws from a Philox (counter-based) generator so
that independent streams can be split off a single integer seed.
"""

import numpy as np


def make_rng(seed, *stream):
    """Return a Philox-backed generator for ``seed`` and optional stream ids."""
    ss = np.random.SeedSequence([int(seed), *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *stream):
    """Derive a child integer seed, stable across runs and platforms."""
    ss = np.random.SeedSequence([int(seed), *[int(s) for s in stream]])
    return int(ss.generate_state(1, dtype=np.uint32)[0])

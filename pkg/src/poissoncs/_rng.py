"""Seed derivation helpers.

Every random draw in the package goes through :func:`make_rng` so that a
64-bit integer seed fully determines the output.  Child seeds are derived
with :class:`numpy.random.SeedSequence`, which gives stable, well-mixed
streams for tuples like ``(master, axis_index, trial_index)``.
"""
import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(*keys):
    """Mix integer keys into a single 64-bit seed."""
    entropy = [int(k) & _MASK64 for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def make_rng(seed, *keys):
    """Return a Generator for ``seed`` (optionally specialised by ``keys``)."""
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed) & _MASK64))

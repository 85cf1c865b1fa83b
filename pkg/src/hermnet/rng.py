"""Portable, counter-based random streams.

Index-level randomness (splits, shuffles, label noise, pseudo-label
initialization) uses SplitMix64 so it can be reproduced bit-for-bit in any
language:

    z = seed + (i + 1) * 0x9E3779B97F4A7C15          (mod 2**64)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out_i = z ^ (z >> 31)

Uniform doubles are ``(out_i >> 11) * 2**-53``.  Permutations are the stable
argsort of the raw 64-bit outputs.  Bounded integers are
``floor(u * bound)``.  Sub-streams are keyed with :func:`derive_seed`.

Floating-point draws (weight init, Gaussian blobs) use numpy's PCG64 seeded
from a derived SplitMix64 value.
"""
from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
MASK64 = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def splitmix64(seed, n):
    """First ``n`` outputs of SplitMix64 started at ``seed``."""
    seed = np.uint64(int(seed) & MASK64)
    with np.errstate(over="ignore"):
        counter = np.arange(1, n + 1, dtype=np.uint64) * GOLDEN
        return _mix(seed + counter)


def derive_seed(seed, *keys):
    """Hash ``seed`` and integer/string ``keys`` into a new 64-bit seed."""
    state = int(seed) & MASK64
    for key in keys:
        if isinstance(key, str):
            key = int.from_bytes(key.encode("utf-8")[:8].ljust(8, b"\0"), "little") ^ len(key)
        state = int(splitmix64(state ^ (int(key) & MASK64), 1)[0])
    return state


def uniform(seed, n):
    """``n`` doubles in [0, 1)."""
    return (splitmix64(seed, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def randint(seed, bound, n):
    """``n`` integers in ``[0, bound)``."""
    return np.floor(uniform(seed, n) * bound).astype(np.int64)


def permutation(seed, n):
    """A uniformly random permutation of ``range(n)``."""
    return np.argsort(splitmix64(seed, n), kind="stable")


def generator(seed, *keys):
    """numpy Generator for float draws, keyed like :func:`derive_seed`."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))

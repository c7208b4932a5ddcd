"""Deterministic seeding and counter-style per-replica streams.

Replica i of a run draws from a stream keyed by (master_seed, i) alone,
so results do not depend on how replicas are scheduled across threads.
numpy-based samplers use Philox generators keyed the same way; the
compiled kernels use an inline xoshiro256++ seeded through splitmix64.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    """One splitmix64 step on a 64-bit integer."""
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(master, index):
    """Stream seed for replica `index` under `master`."""
    return splitmix64((int(master) & _MASK) ^ ((int(index) * _GOLDEN) & _MASK))


def replica_seeds(master, count):
    return np.array([derive_seed(master, i) for i in range(count)], dtype=np.uint64)


def philox(master, index=0):
    """numpy Generator on a Philox stream keyed by (master, index)."""
    return np.random.Generator(np.random.Philox(key=derive_seed(master, index)))


U64 = np.uint64
_NB_MASK = U64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True, inline="always")
def _mix64(x):
    x = (x + U64(0x9E3779B97F4A7C15)) & _NB_MASK
    z = x
    z = ((z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)) & _NB_MASK
    z = ((z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)) & _NB_MASK
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def state_from_seed(seed):
    """xoshiro256++ state array from a 64-bit seed."""
    s = np.empty(4, dtype=np.uint64)
    x = seed
    for i in range(4):
        x = _mix64(x)
        s[i] = x
    return s


@njit(cache=True, inline="always")
def _rotl(x, k):
    return ((x << k) | (x >> (U64(64) - k))) & _NB_MASK


@njit(cache=True, inline="always")
def next_u64(s):
    res = (_rotl((s[0] + s[3]) & _NB_MASK, U64(23)) + s[0]) & _NB_MASK
    t = (s[1] << U64(17)) & _NB_MASK
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], U64(45))
    return res


@njit(cache=True, inline="always")
def next_uniform(s):
    """Uniform in [0, 1) with 53-bit resolution."""
    return (next_u64(s) >> U64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def next_normal_pair(s):
    """Two independent standard normals by the polar method."""
    while True:
        u = 2.0 * next_uniform(s) - 1.0
        v = 2.0 * next_uniform(s) - 1.0
        q = u * u + v * v
        if 0.0 < q < 1.0:
            break
    f = np.sqrt(-2.0 * np.log(q) / q)
    return u * f, v * f

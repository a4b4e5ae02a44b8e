"""Seedable splitmix64 generator usable from numba kernels.

A generator state is a one-element ``uint64`` array, so it can be handed to
jitted code and advanced in place without the GIL.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


def make_rng(seed: int) -> np.ndarray:
    """Fresh generator state for a 64-bit seed."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return ss.generate_state(1, np.uint64).copy()


def spawn_rngs(seed: int, n: int) -> list[np.ndarray]:
    """``n`` independent generator states derived from one seed."""
    children = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).spawn(n)
    return [c.generate_state(1, np.uint64).copy() for c in children]


@njit(cache=True, nogil=True)
def next_u64(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def next_double(state):
    """Uniform double in [0, 1)."""
    return np.float64(next_u64(state) >> _S11) * _INV53


@njit(cache=True, nogil=True)
def next_below(state, n):
    """Uniform integer in ``0..n-1``."""
    i = np.int64(next_double(state) * n)
    return i if i < n else n - 1

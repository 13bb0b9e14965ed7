"""Counter-based random numbers keyed by replica.

Every random quantity in the package is a pure function of a key built from
``(seed, replica, ...)``.  Draw ``k`` of the stream with key ``h`` is
``mix64(h + (k + 1) * GOLDEN)``, the SplitMix64 output function, so streams can
be regenerated at any time and replicas never share generator state.  The
same arithmetic is available in plain Python (used by the reference Harris
engine) and in numba (used by the compiled kernels); the test-suite checks
they agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO53 = 1.0 / (1 << 53)

# stream tags, mixed into keys so that different uses of one replica never overlap
STREAM_DYNAMICS = 1
STREAM_INITIAL = 2
STREAM_CLOCK = 3
STREAM_INDEPENDENT = 4


def mix64(z: int) -> int:
    """SplitMix64 finaliser on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def zigzag(x: int) -> int:
    """Map a signed coordinate to a non-negative integer injectively."""
    return 2 * x if x >= 0 else -2 * x - 1


def derive_key(*words: int) -> int:
    """Fold a sequence of non-negative integers into one 64-bit key."""
    h = 0x6A09E667F3BCC908
    for w in words:
        if w < 0:
            raise ValueError("key words must be non-negative")
        h = mix64(h ^ mix64((w + GOLDEN) & MASK64))
    return h


def draw(key: int, k: int) -> int:
    """The ``k``-th 64-bit output of the stream with the given key."""
    return mix64((key + (k + 1) * GOLDEN) & MASK64)


def to_unit(z: int) -> float:
    """Uniform double in (0, 1] from a 64-bit integer."""
    return ((z >> 11) + 1) * _TWO53


@dataclass(frozen=True)
class ReplicaKey:
    """Identifies the randomness of one replica: master seed plus replica index."""

    seed: int
    replica: int = 0

    def __post_init__(self) -> None:
        if self.seed < 0 or self.replica < 0:
            raise ValueError("seed and replica index must be non-negative")

    def key(self, *words: int) -> int:
        return derive_key(self.seed, self.replica, *words)


# numba twins -------------------------------------------------------------

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U_INIT = np.uint64(0x6A09E667F3BCC908)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_U1 = np.uint64(1)


@nb.njit(cache=True, inline="always")
def nb_mix64(z):
    z = (z ^ (z >> _U30)) * _U_M1
    z = (z ^ (z >> _U27)) * _U_M2
    return z ^ (z >> _U31)


@nb.njit(cache=True)
def nb_derive_key3(a, b, c):
    """Numba version of ``derive_key(a, b, c)`` for non-negative int64 words."""
    h = _U_INIT
    h = nb_mix64(h ^ nb_mix64(np.uint64(a) + _U_GOLDEN))
    h = nb_mix64(h ^ nb_mix64(np.uint64(b) + _U_GOLDEN))
    h = nb_mix64(h ^ nb_mix64(np.uint64(c) + _U_GOLDEN))
    return h


@nb.njit(cache=True, inline="always")
def nb_uniform(state):
    """Advance the one-word counter ``state[0]`` and return a double in (0, 1]."""
    state[0] += _U_GOLDEN
    z = nb_mix64(state[0])
    return np.float64((z >> _U11) + _U1) * _TWO53

"""Counter-based random streams.

Every uniform variate is a pure function of ``(master_seed, kind,
substream_index)``.  The mixing function is the SplitMix64 finalizer applied
twice, once unkeyed over the counter and once keyed by the stream key, so
two streams with different keys never share a shifted copy of the same
sequence.  Uniforms live on the 53-bit grid ``{1, ..., 2**53} / 2**53``,
i.e. in ``(0, 1]``; zero is never produced.

Because nothing is sequential, any partition of the work across threads or
processes sees exactly the same variates, and the same pair uniform can be
reused for several parameter settings (monotone coupling).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO_M53 = 2.0**-53

# Walk substreams pack (walk, step) into one index.
WALK_STEP_BITS = 32


class StreamKind(IntEnum):
    WEIGHTS = 1
    GREEN = 2
    EDGE = 3
    WALK = 4
    PAIRS = 5


def mix64(z: int) -> int:
    """SplitMix64 finalizer on Python ints (reference implementation)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, kind: int) -> int:
    """64-bit key of the stream family ``(master_seed, kind)``."""
    if not 0 <= master_seed <= MASK64:
        raise ValueError(f"master_seed must fit in 64 bits, got {master_seed}")
    return mix64(mix64(master_seed) ^ ((int(kind) * GOLDEN) & MASK64))


def uniform_ref(key: int, index: int) -> float:
    z = mix64((key + (index + 1) * GOLDEN) & MASK64)
    z = mix64(z ^ key)
    return ((z >> 11) + 1) * _TWO_M53


# numba versions; every constant is uint64 so no silent float promotion happens
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_U1 = np.uint64(1)
_UM1 = np.uint64(_M1)
_UM2 = np.uint64(_M2)
_UGOLD = np.uint64(GOLDEN)


@nb.njit(inline="always", cache=True)
def _mix(z):
    z = (z ^ (z >> _U30)) * _UM1
    z = (z ^ (z >> _U27)) * _UM2
    return z ^ (z >> _U31)


@nb.njit(inline="always", cache=True)
def uniform_at(key, index):
    """Uniform in (0, 1] for uint64 ``key`` and uint64 ``index``."""
    z = _mix(key + (index + _U1) * _UGOLD)
    z = _mix(z ^ key)
    return ((z >> _U11) + _U1) * _TWO_M53


@nb.njit(cache=True)
def _uniform_array(key, indices):
    out = np.empty(indices.shape[0], dtype=np.float64)
    for i in range(indices.shape[0]):
        out[i] = uniform_at(key, indices[i])
    return out


def uniforms(master_seed: int, kind: int, indices) -> np.ndarray:
    """Vectorised uniforms for many substream indices of one stream family."""
    idx = np.ascontiguousarray(np.asarray(indices, dtype=np.uint64).ravel())
    key = np.uint64(stream_key(master_seed, kind))
    return _uniform_array(key, idx)


def edge_index(u: int, v: int, n: int) -> int:
    """Substream index of the unordered pair {u, v} among ``n`` vertices."""
    if u == v:
        raise ValueError("self-pairs have no edge substream")
    a, b = (u, v) if u < v else (v, u)
    return a * n + b


def walk_index(walk: int, step: int) -> int:
    return (walk << WALK_STEP_BITS) | step


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    kind: StreamKind
    substream_index: int

    def uniform(self) -> float:
        return uniform_ref(stream_key(self.master_seed, self.kind), self.substream_index)

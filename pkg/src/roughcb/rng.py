"""Counter-based random numbers (Philox4x64-10) usable inside numba kernels.

Each path owns the stream keyed by ``(seed, stream_id, engine tag)``: the
key is the 64-bit seed plus the engine tag, the counter carries the stream
id in its third word.  The block function is the one used by
``numpy.random.Philox``, so raw outputs can be compared with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import DomainError

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_INV53 = 1.0 / 9007199254740992.0

TAG_SVE = 1
TAG_CMJ = 2
TAG_CP = 3

# layout of the per-path state vector (uint64[10])
#   0,1: key   2..5: counter   6..9: output buffer
# position within the buffer is kept separately in an int64 cell
STATE_SIZE = 10


@dataclass(frozen=True)
class RngContract:
    seed: int
    stream_id: int

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if int(v) != v or not (0 <= int(v) < 2 ** 64):
                raise DomainError(f"{name} must be an integer in [0, 2**64)")


@nb.njit(inline="always", cache=True)
def _mulhilo(a, b):
    al = a & _MASK32
    ah = a >> _S32
    bl = b & _MASK32
    bh = b >> _S32
    p0 = al * bl
    p1 = al * bh
    p2 = ah * bl
    p3 = ah * bh
    mid = (p0 >> _S32) + (p1 & _MASK32) + (p2 & _MASK32)
    hi = p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    lo = a * b
    return hi, lo


@nb.njit(cache=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    """Ten Philox4x64 rounds; returns the four output words."""
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        n0 = hi1 ^ c1 ^ k0
        n2 = hi0 ^ c3 ^ k1
        c0 = n0
        c1 = lo1
        c2 = n2
        c3 = lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@nb.njit(cache=True)
def stream_init(state, pos, seed, stream_id, tag):
    state[0] = np.uint64(seed)
    state[1] = np.uint64(tag)
    state[2] = _ZERO
    state[3] = _ZERO
    state[4] = np.uint64(stream_id)
    state[5] = _ZERO
    pos[0] = 4


@nb.njit(cache=True)
def next_u64(state, pos):
    if pos[0] >= 4:
        state[2] = state[2] + _ONE
        if state[2] == _ZERO:
            state[3] = state[3] + _ONE
        o0, o1, o2, o3 = philox_block(state[2], state[3], state[4], state[5], state[0], state[1])
        state[6] = o0
        state[7] = o1
        state[8] = o2
        state[9] = o3
        pos[0] = 0
    r = state[6 + pos[0]]
    pos[0] += 1
    return r


@nb.njit(cache=True)
def next_uniform(state, pos):
    """Uniform on the open interval (0, 1)."""
    r = next_u64(state, pos) >> _S11
    return (np.float64(r) + 0.5) * _INV53


@nb.njit(cache=True)
def next_normal(state, pos):
    """Standard normal by the Box-Muller transform (one value per call)."""
    u1 = next_uniform(state, pos)
    u2 = next_uniform(state, pos)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@nb.njit(cache=True)
def next_exponential(state, pos):
    return -np.log(next_uniform(state, pos))


@nb.njit(cache=True)
def next_poisson(state, pos, mean):
    """Poisson variate by sequential inversion; large means are split into chunks."""
    total = 0
    m = mean
    while m > 0.0:
        chunk = m if m <= 500.0 else 500.0
        m -= chunk
        u = next_uniform(state, pos)
        p = np.exp(-chunk)
        cdf = p
        k = 0
        while u > cdf:
            k += 1
            p *= chunk / k
            cdf += p
            if p < 1e-300 and k > chunk:
                break
        total += k
    return total


@nb.njit(cache=True)
def _fill_uniforms(seed, stream_id, tag, out):
    state = np.zeros(STATE_SIZE, dtype=np.uint64)
    pos = np.zeros(1, dtype=np.int64)
    stream_init(state, pos, seed, stream_id, tag)
    for i in range(out.size):
        out[i] = next_uniform(state, pos)


@nb.njit(cache=True)
def _fill_raw(seed, stream_id, tag, out):
    state = np.zeros(STATE_SIZE, dtype=np.uint64)
    pos = np.zeros(1, dtype=np.int64)
    stream_init(state, pos, seed, stream_id, tag)
    for i in range(out.size):
        out[i] = next_u64(state, pos)


def uniforms(rng: RngContract, n: int, tag: int = 0) -> np.ndarray:
    """The first ``n`` uniforms of a stream (for inspection and tests)."""
    out = np.empty(n)
    _fill_uniforms(np.uint64(rng.seed), np.uint64(rng.stream_id), np.uint64(tag), out)
    return out


def raw_words(rng: RngContract, n: int, tag: int = 0) -> np.ndarray:
    out = np.empty(n, dtype=np.uint64)
    _fill_raw(np.uint64(rng.seed), np.uint64(rng.stream_id), np.uint64(tag), out)
    return out


def numpy_reference(rng: RngContract, n: int, tag: int = 0) -> np.ndarray:
    """The same words produced by ``numpy.random.Philox`` with matching key and counter."""
    bg = np.random.Philox(key=np.array([rng.seed, tag], dtype=np.uint64),
                          counter=np.array([0, 0, rng.stream_id, 0], dtype=np.uint64))
    return bg.random_raw(n).astype(np.uint64)

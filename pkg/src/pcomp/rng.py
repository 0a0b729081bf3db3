"""Uniform random backends and p-bits.

A p-bit outputs 1 with probability ``sigmoid(I)`` for a real input ``I``.
It is realized here as ``sigmoid(I) > u`` with ``u`` a uniform variate in
[0, 1) drawn from a seedable backend.

Three backends are available, selected by name:

``lfsr32``
    32-stage Fibonacci LFSR with taps (32, 22, 2, 1). 32 output bits are
    packed MSB-first into one word, and a word divided by 2**32 is one
    variate. Period 2**32 - 1 bits.
``longperiod``
    xoshiro256** (256-bit state), 53-bit doubles from the top bits.
``counter``
    Philox4x64 counter-based generator. Streams are keyed by
    :class:`numpy.random.SeedSequence`, which is also the rule used to split
    a master seed into per-chain seeds (:func:`split_seed`).

All backends produce the same stream whether variates are drawn one at a
time with :meth:`RngBackend.uniform01` or in blocks with
:meth:`RngBackend.uniforms`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from scipy.special import expit

__all__ = [
    "BACKEND_KINDS",
    "CounterBackend",
    "InvalidStateError",
    "LFSR32Backend",
    "LongPeriodBackend",
    "PBitVector",
    "RngBackend",
    "lfsr_next",
    "lfsr32_next",
    "make_backend",
    "pbit_array_sample",
    "pbit_sample",
    "sigmoid",
    "split_seed",
    "uniform01",
]

MASK64 = (1 << 64) - 1
LFSR32_TAPS = (32, 22, 2, 1)
LFSR16_TAPS = (16, 15, 13, 4)


class InvalidStateError(ValueError):
    """Raised for a generator state that cannot produce a stream."""


def lfsr_next(state: int, width: int, taps: Sequence[int]) -> tuple[int, int]:
    """Advance a Fibonacci LFSR of ``width`` bits by one step.

    Stages are numbered 1..width from the input end: stage ``p`` is bit
    ``width - p``, so stage ``width`` is the least significant bit, which is
    shifted out. The feedback bit (XOR of the tap stages) is returned and
    shifted in at the most significant end. With this numbering the taps of
    a primitive polynomial give the maximal period ``2**width - 1``.
    """
    if state == 0:
        raise InvalidStateError("LFSR state must be nonzero")
    bit = 0
    for p in taps:
        bit ^= (state >> (width - p)) & 1
    state = (state >> 1) | (bit << (width - 1))
    return bit, state


def lfsr32_next(state: int) -> tuple[int, int]:
    return lfsr_next(state, 32, LFSR32_TAPS)


def splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step: returns (output, new state)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), x


def split_seed(master_seed: int, index: int) -> int:
    """Derive the 64-bit seed of chain ``index`` from ``master_seed``."""
    ss = np.random.SeedSequence(_check_seed(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


# ---------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _lfsr32_fill(state, out):
    s = np.uint32(state)
    scale = 1.0 / 4294967296.0
    for k in range(out.shape[0]):
        word = np.uint32(0)
        for _ in range(32):
            bit = (s ^ (s >> 10) ^ (s >> 30) ^ (s >> 31)) & np.uint32(1)
            s = (s >> np.uint32(1)) | (bit << np.uint32(31))
            word = (word << np.uint32(1)) | bit
        out[k] = word * scale
    return s


@numba.njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(cache=True)
def _xoshiro_fill(s, out):
    scale = 1.0 / 9007199254740992.0
    for k in range(out.shape[0]):
        result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
        t = s[1] << np.uint64(17)
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        out[k] = (result >> np.uint64(11)) * scale


# ---------------------------------------------------------------------------
# backends


class RngBackend:
    """Seedable source of uniform variates in [0, 1).

    Single-owner mutable state: do not share one instance between chains.
    """

    kind: str = ""

    def __init__(self, seed: int):
        self.seed = _check_seed(seed)

    def uniform01(self) -> float:
        return float(self.uniforms(1)[0])

    def uniforms(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}(seed={self.seed})"


class LFSR32Backend(RngBackend):
    kind = "lfsr32"

    def __init__(self, seed: int):
        super().__init__(seed)
        word, _ = splitmix64(self.seed)
        # fold to 32 bits; zero is the forbidden fixed point
        self.state = ((word ^ (word >> 32)) & 0xFFFFFFFF) or 1

    def next_bit(self) -> int:
        bit, self.state = lfsr32_next(self.state)
        return bit

    def uniforms(self, n: int) -> np.ndarray:
        if self.state == 0:
            raise InvalidStateError("LFSR state must be nonzero")
        out = np.empty(int(n), dtype=np.float64)
        self.state = int(_lfsr32_fill(np.uint32(self.state), out))
        return out


class LongPeriodBackend(RngBackend):
    kind = "longperiod"

    def __init__(self, seed: int):
        super().__init__(seed)
        x = self.seed
        words = []
        for _ in range(4):
            z, x = splitmix64(x)
            words.append(z)
        self.state = np.array(words, dtype=np.uint64)

    def uniforms(self, n: int) -> np.ndarray:
        out = np.empty(int(n), dtype=np.float64)
        _xoshiro_fill(self.state, out)
        return out


class CounterBackend(RngBackend):
    kind = "counter"

    def __init__(self, seed: int):
        super().__init__(seed)
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))

    def uniforms(self, n: int) -> np.ndarray:
        return self._gen.random(int(n))

    def split(self, index: int) -> "CounterBackend":
        return CounterBackend(split_seed(self.seed, index))


BACKEND_KINDS = {
    "lfsr32": LFSR32Backend,
    "longperiod": LongPeriodBackend,
    "counter": CounterBackend,
}


def make_backend(kind: str = "longperiod", seed: int = 0) -> RngBackend:
    try:
        cls = BACKEND_KINDS[kind.lower()]
    except KeyError:
        raise ValueError(
            f"unknown backend {kind!r}; choose one of {sorted(BACKEND_KINDS)}"
        ) from None
    return cls(seed)


def uniform01(backend: RngBackend) -> float:
    return backend.uniform01()


# ---------------------------------------------------------------------------
# p-bits


def sigmoid(x):
    return expit(x)


def pbit_sample(I: float, u: float) -> int:
    """Return 1 if ``sigmoid(I) > u`` else 0."""
    if not math.isfinite(I):
        raise ValueError(f"p-bit input must be finite, got {I}")
    if not 0.0 <= u < 1.0:
        raise ValueError(f"uniform variate must lie in [0, 1), got {u}")
    return int(expit(I) > u)


@dataclass
class PBitVector:
    """Inputs and sampled binary outputs of an array of p-bits."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        outputs = np.asarray(self.outputs)
        if self.inputs.ndim != 1 or self.inputs.shape != outputs.shape:
            raise ValueError("inputs and outputs must be 1-D of equal length")
        if len(self.inputs) < 1:
            raise ValueError("a p-bit vector needs at least one p-bit")
        if not np.all((outputs == 0) | (outputs == 1)):
            raise ValueError("p-bit outputs must be 0 or 1")
        self.outputs = outputs.astype(np.int8)

    def __len__(self) -> int:
        return len(self.outputs)


def pbit_array_sample(inputs, backend: RngBackend) -> PBitVector:
    """Sample every p-bit once, one fresh uniform per p-bit in index order."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 1 or len(inputs) == 0:
        raise ValueError("need a non-empty 1-D input vector")
    if not np.all(np.isfinite(inputs)):
        raise ValueError("p-bit inputs must be finite")
    u = backend.uniforms(len(inputs))
    return PBitVector(inputs, (expit(inputs) > u).astype(np.int8))

"""Portable seeded random numbers.

The generator is xoshiro256** (Blackman & Vigna). Its 256-bit state
``s0..s3`` advances as::

    out = rotl(s1 * 5, 7) * 9
    t   = s1 << 17
    s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)

with all arithmetic modulo 2**64. The state is filled from the 64-bit seed by
four SplitMix64 steps. Derived quantities:

* uniform double in [0, 1): ``(out >> 11) * 2**-53``
* bounded integer in [0, n): ``out % n`` after rejecting ``out < (2**64 - n) % n``
* standard normal: Box-Muller cosine branch on two uniforms
* permutation: stable argsort of ``n`` raw outputs

Independent consumers use :meth:`Rng.substream`, whose seed is
``seed XOR fnv1a64(tag)``, so reordering one consumer never shifts another.
"""
from __future__ import annotations

import math

import numpy as np

from .. import kernels

MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(x: int) -> tuple[int, int]:
    """One SplitMix64 step; returns (new_state, output)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def fnv1a64(tag: str) -> int:
    h = _FNV_OFFSET
    for byte in tag.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & MASK64
    return h


class Rng:
    """xoshiro256** stream. Not safe to share between threads."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        x = self.seed
        words = []
        for _ in range(4):
            x, out = splitmix64(x)
            words.append(out)
        self._state = np.array(words, dtype=np.uint64)

    def __repr__(self):
        return f"Rng(seed={self.seed})"

    def substream(self, tag: str) -> "Rng":
        return Rng(self.seed ^ fnv1a64(tag))

    def getstate(self) -> list[int]:
        return [int(v) for v in self._state]

    def setstate(self, words) -> None:
        self._state = np.array([int(w) & MASK64 for w in words], dtype=np.uint64)

    def raw(self, n: int) -> np.ndarray:
        return kernels.xoshiro_fill(self._state, int(n))

    def next_u64(self) -> int:
        return int(self.raw(1)[0])

    def random(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        vals = (self.raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        if size is None:
            return float(vals[0])
        return vals.reshape(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def normal(self, loc=0.0, scale=1.0, size=None):
        n = 1 if size is None else int(np.prod(size))
        u = self.random(2 * n).reshape(n, 2)
        u1 = 1.0 - u[:, 0]  # (0, 1]
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u[:, 1])
        z = loc + scale * z
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def integers(self, high: int, size=None):
        """Unbiased integers in ``[0, high)``."""
        high = int(high)
        if high < 1:
            raise ValueError("high must be >= 1")
        n = 1 if size is None else int(np.prod(size))
        threshold = np.uint64(((1 << 64) - high) % high)
        h = np.uint64(high)
        out = np.empty(n, dtype=np.int64)
        filled = 0
        while filled < n:
            draw = self.raw(n - filled)
            ok = draw[draw >= threshold]
            out[filled:filled + ok.size] = (ok % h).astype(np.int64)
            filled += ok.size
        if size is None:
            return int(out[0])
        return out.reshape(size)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.raw(n), kind="stable").astype(np.int64)

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)`` in random order."""
        if k > n:
            raise ValueError("cannot choose more items than available")
        return self.permutation(n)[:k]

    def bernoulli(self, p: float, size) -> np.ndarray:
        return self.random(size) < p

"""Deterministic random number generation.

All randomness in this package flows from a single 64-bit root seed through
named substreams, so that two runs configured identically are bit-identical
and experiment variants (e.g. ablation wirings) can share exactly the same
draws for the components they have in common.

The generator is SplitMix64: a 64-bit counter advanced by the golden-gamma
constant, finalized with two xor-multiply-shift mixing rounds. It is simple
enough to reimplement from this docstring, which is what the test-suite
oracle does.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """SplitMix64 finalizer: xor-shift 30, mul, xor-shift 27, mul, xor-shift 31."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """FNV-1a hash of a UTF-8 string, used to derive substream labels."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def substream_seed(root_seed: int, label: str) -> int:
    """Derive the seed of the named substream of ``root_seed``.

    Streams with different labels are independent for practical purposes;
    the same (root_seed, label) pair always yields the same stream.
    """
    return mix64((root_seed & _MASK64) ^ fnv1a64(label))


class SplitMix64:
    """Sequential SplitMix64 stream over a 64-bit state."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = self.seed

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return mix64(self._state)

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection, avoiding modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK64 - (_MASK64 + 1) % n  # largest multiple of n, minus 1
        while True:
            u = self.next_u64()
            if u <= limit:
                return u % n

    def next_float(self) -> float:
        """Uniform float64 in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def next_uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def next_gauss(self) -> float:
        """Standard normal via Box-Muller (one value per call, no caching)."""
        u1 = self.next_float()
        u2 = self.next_float()
        while u1 <= 0.0:
            u1 = self.next_float()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def stream(self, label: str) -> "SplitMix64":
        """Child stream named by ``label``.

        Derived from this stream's seed, not its position, so the set of
        draws a sibling component consumes can never shift another
        component's stream.
        """
        return SplitMix64(substream_seed(self.seed, label))

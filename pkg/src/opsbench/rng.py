"""Portable 64-bit RNG for reproducible plans and fault sampling.

splitmix64 (Steele, Lea & Flood 2014). The whole generator is its three
constants, so a plan produced here can be reproduced bit-for-bit by any
other implementation:

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Deterministic stream of 64-bit words from a 64-bit seed."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], inclusive on both ends."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        span = hi - lo + 1
        return lo + self.next_u64() % span

    def expovariate(self, rate: float) -> float:
        """Exponential draw with mean 1/rate."""
        if rate <= 0:
            raise ValueError("rate must be positive")
        # random() can return exactly 0.0; 1-u is then 1.0 and log is safe.
        return -math.log(1.0 - self.random()) / rate

    def choice(self, items: list):
        if not items:
            raise ValueError("cannot choose from an empty list")
        return items[self.next_u64() % len(items)]


def _fold_label(label: "int | str") -> int:
    if isinstance(label, int):
        return label & _MASK64
    # FNV-1a over UTF-8 bytes; python's hash() is salted per process and
    # would break cross-run reproducibility.
    acc = 0xCBF29CE484222325
    for byte in label.encode("utf-8"):
        acc = ((acc ^ byte) * 0x100000001B3) & _MASK64
    return acc


def derive_seed(seed: int, *labels: "int | str") -> int:
    """Stable child seed for the (seed, labels) combination."""
    stream = SplitMix64(seed)
    value = stream.next_u64()
    for label in labels:
        value = SplitMix64(value ^ _fold_label(label)).next_u64()
    return value

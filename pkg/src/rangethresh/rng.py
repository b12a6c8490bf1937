"""Seedable deterministic random number generator.

The generator is splitmix64 (Steele, Lea, Vigna): a 64-bit counter advanced
by the golden-ratio increment 0x9e3779b97f4a7c15, with the output mixed by
two xor-shift-multiply rounds.  The algorithm is fixed here on purpose:
streams must be bit-identical across platforms and library versions, which
is a contract numpy / stdlib generators do not make for their distribution
methods.

Stream consumption, per call:

* ``next_u64``       1 raw output
* ``random``         1 (top 53 bits)
* ``uniform``        1
* ``randint``        1
* ``normal``         2 (Box-Muller, cosine branch only, no caching)
* ``exponential``    1
* ``poisson``        k+1 draws for a return value of k (Knuth product method)
* ``beta_int``       a+b draws (ratio of integer-shape gamma sums)
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class Rng:
    """splitmix64 stream seeded with a 64-bit integer."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        """Advance the state and return the next raw 64-bit output."""
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1), 53-bit resolution."""
        return (self.next_u64() >> 11) * 2.0**-53

    def random_open(self) -> float:
        """Uniform float in (0, 1]; safe as a log() argument."""
        return ((self.next_u64() >> 11) + 1) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive.  Requires hi >= lo."""
        n = hi - lo + 1
        return lo + min(int(self.random() * n), n - 1)

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        """Gaussian draw via Box-Muller; consumes exactly two uniforms."""
        u1 = self.random_open()
        u2 = self.random()
        return mean + std * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def exponential(self, rate: float = 1.0) -> float:
        return -math.log(self.random_open()) / rate

    def poisson(self, lam: float) -> int:
        """Poisson count via Knuth's product-of-uniforms method."""
        if lam < 0:
            raise ValueError("poisson rate must be >= 0")
        limit = math.exp(-lam)
        k = 0
        p = self.random()
        while p > limit:
            k += 1
            p *= self.random()
        return k

    def beta_int(self, a: int, b: int) -> float:
        """Beta(a, b) draw for integer shapes a, b >= 1.

        Uses the gamma-ratio construction X/(X+Y) where a gamma with an
        integer shape is a sum of unit exponentials, so consumption is a
        fixed a+b draws (no rejection loop).
        """
        if a < 1 or b < 1:
            raise ValueError("beta_int requires integer shapes >= 1")
        x = sum(self.exponential() for _ in range(a))
        y = sum(self.exponential() for _ in range(b))
        return x / (x + y)

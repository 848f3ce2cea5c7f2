"""Portable seeded randomness.

Everything that shuffles or samples goes through :class:`SplitMix64` so the
same seed gives the same splits and plans on any platform or implementation
that follows the same recipe:

* state advances by ``0x9E3779B97F4A7C15`` per draw, output is the standard
  splitmix64 finalizer;
* ``random()`` takes the top 53 bits;
* ``below(n)`` rejects draws at or above the largest multiple of ``n``
  below ``2**64`` and returns ``draw % n``;
* ``shuffle`` is Fisher-Yates from the last index down.
"""

from __future__ import annotations

import hashlib
from typing import MutableSequence, TypeVar

T = TypeVar("T")

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            z = self.next_u64()
            if z < limit:
                return z % n

    def shuffle(self, items: MutableSequence[T]) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def derive_seed(seed: int, *labels: object) -> int:
    """Stable 64-bit sub-seed from a parent seed and any labels."""
    text = ":".join([str(seed), *map(str, labels)])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "big")

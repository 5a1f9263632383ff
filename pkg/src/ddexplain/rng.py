"""Deterministic 64-bit linear congruential generator.

Every source of randomness in the package (toy extractor filters, demo
fixtures) flows through this generator so that identical seeds regenerate
identical artifacts on any platform. The recurrence is

    state <- (state * 6364136223846793005 + 1442695040888963407) mod 2**64

(Knuth's MMIX multiplier/increment), and floats take the top 53 bits of the
advanced state: ``(state >> 11) * 2**-53`` in [0, 1).
"""

from __future__ import annotations

_MULT = 6364136223846793005
_INC = 1442695040888963407
_MASK = (1 << 64) - 1


class Lcg:
    """Seeded 64-bit LCG with uniform float and bounded-int draws."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state * _MULT + _INC) & _MASK
        return self.state

    def next_float(self) -> float:
        """Uniform draw in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def next_int(self, n: int) -> int:
        """Uniform draw in {0, ..., n-1} (n <= 2**53)."""
        if n <= 0:
            raise ValueError("n must be positive")
        return int(self.next_float() * n)

    def sample(self, n: int, k: int) -> list[int]:
        """Draw k distinct sorted indices from {0, ..., n-1}."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        pool = list(range(n))
        picked = []
        for _ in range(k):
            j = self.next_int(len(pool))
            picked.append(pool.pop(j))
        return sorted(picked)

"""Deterministic random streams for workload generation.

Every schedule is derived from a 64-bit seed through splitmix64, a
shift-multiply generator small enough to restate in the README so that
identical schedules can be reproduced outside this package.  The
simulation core itself never draws random numbers; randomness only
enters when benchmark schedules are generated up front.
"""

import math

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    """splitmix64 stream: state += golden; output = mix(state)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Float in [0, 1), 53 usable bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi], scaled without modulo bias."""
        if hi < lo:
            raise ValueError("empty range")
        span = hi - lo + 1
        return lo + ((self.next_u64() * span) >> 64)

    def exponential_ticks(self, mean: float) -> int:
        """Exponential gap with the given mean, rounded to >= 1 tick."""
        u = self.uniform()
        gap = -mean * math.log1p(-u)
        return max(1, round(gap))

def derive_seed(base_seed: int, cell_index: int) -> int:
    """Per-cell seed: base xor cell index (stream mixing does the rest)."""
    return (base_seed ^ cell_index) & _MASK

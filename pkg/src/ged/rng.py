"""Seeded pseudo-random stream used for treatment assignment.

The generator is xoshiro256** with its 256-bit state filled by four
successive SplitMix64 outputs of the seed. Both algorithms are pinned, as is
the way bounded integers are drawn, so a seed reproduces the same design in
any implementation that follows the same draw order.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(seed: int):
    """Yield the SplitMix64 sequence for `seed` (reference constants)."""
    state = seed & MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        yield z ^ (z >> 31)


class Rng:
    def __init__(self, seed: int = 0):
        if not 0 <= seed <= MASK64:
            raise ValueError(f"seed must be in [0, 2**64), got {seed}")
        sm = splitmix64(seed)
        self._s = [next(sm) for _ in range(4)]

    @classmethod
    def from_state(cls, state: tuple[int, int, int, int]) -> Rng:
        rng = cls.__new__(cls)
        rng._s = [s & MASK64 for s in state]
        return rng

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._s)

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def below(self, n: int) -> int:
        """Uniform integer in [0, n).

        Draws 64-bit values and rejects those under (2**64 - n) mod n, then
        reduces modulo n. Every call consumes at least one draw, even for n == 1.
        """
        if n < 1:
            raise ValueError("bound must be positive")
        threshold = ((1 << 64) - n) % n
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, walking from the last index down to 1."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, population: int, k: int) -> list[int]:
        """k distinct indices from range(population), via a partial forward Fisher-Yates."""
        pool = list(range(population))
        for i in range(k):
            j = i + self.below(population - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

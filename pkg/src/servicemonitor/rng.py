"""Deterministic 64-bit PRNG used for every random decision in the package.

All randomness flows from one master seed through ``derive_seed(seed,
tag, index)`` into independent xoshiro256** streams, so concurrent
sub-procedures (per-tree bagging, per-trace sampling, fold shuffling)
never share a generator and results are reproducible bit for bit.
"""

from __future__ import annotations

import hashlib

_MASK = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    """One step of the splitmix64 sequence: (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256StarStar:
    """xoshiro256** generator with splitmix64 state seeding."""

    def __init__(self, seed: int):
        state = seed & _MASK
        s = []
        for _ in range(4):
            state, out = _splitmix64(state)
            s.append(out)
        # All-zero state is invalid for xoshiro; splitmix cannot produce
        # four zero outputs from any seed, but guard regardless.
        if not any(s):
            s[0] = 1
        self._s = s

    def next_uint64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_uint64() >> 11) * (2.0 ** -53)

    def randbelow(self, n: int) -> int:
        """Integer in [0, n). Plain modulo; bias is negligible for n << 2**64."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        return self.next_uint64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, population: int, count: int) -> list[int]:
        """``count`` distinct indices from range(population), ascending."""
        if count > population:
            raise ValueError("cannot sample more indices than the population")
        pool = list(range(population))
        for i in range(count):
            j = i + self.randbelow(population - i)
            pool[i], pool[j] = pool[j], pool[i]
        return sorted(pool[:count])


def _tag_bits(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "little")


def derive_seed(seed: int, tag: str, index: int = 0) -> int:
    """Derive an independent 64-bit stream seed from (seed, tag, index)."""
    state = (seed & _MASK) ^ _tag_bits(tag)
    state, _ = _splitmix64(state)
    state ^= index & _MASK
    _, out = _splitmix64(state)
    return out

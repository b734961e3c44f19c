"""xoshiro256** seeded through splitmix64.

A bit-exact, platform-independent generator so that sampled pixel sets and
synthetic noise are reproducible everywhere.
"""
from __future__ import annotations

import math

import numpy as np

_M64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Return (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _M64


class Xoshiro256:
    def __init__(self, seed: int = 0, state: tuple[int, int, int, int] | None = None):
        if state is None:
            sm = seed & _M64
            s = []
            for _ in range(4):
                sm, out = splitmix64(sm)
                s.append(out)
            state = tuple(s)
        if not any(state):
            raise ValueError("xoshiro256** state must not be all zero")
        self.s = [x & _M64 for x in state]
        self._spare: float | None = None

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _M64, 7) * 9) & _M64
        t = (s[1] << 17) & _M64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection on the full 64-bit range."""
        if n <= 0:
            raise ValueError("bound must be positive")
        threshold = ((1 << 64) - n) % n  # == 2**64 mod n
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % n

    def normal(self) -> float:
        """Standard normal via Box-Muller; the second deviate is cached."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normals(self, n: int) -> np.ndarray:
        return np.array([self.normal() for _ in range(n)], dtype=np.float64)

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.random() for _ in range(n)], dtype=np.float64)

    def partial_shuffle(self, items: np.ndarray, n: int) -> np.ndarray:
        """First ``n`` entries of a Fisher-Yates shuffle of ``items`` (a copy)."""
        a = np.array(items)
        L = len(a)
        if n > L:
            raise ValueError(f"cannot draw {n} of {L} items")
        for i in range(n):
            j = i + self.below(L - i)
            a[i], a[j] = a[j], a[i]
        return a[:n]

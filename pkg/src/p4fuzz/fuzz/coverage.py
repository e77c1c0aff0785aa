"""Path-coverage tracking with a bloom filter backed by an exact shadow set."""

from __future__ import annotations

import math
import random

_M64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # splitmix64 finalizer
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


class BloomFilter:
    """Bit array of ``m`` bits probed at ``k`` independently hashed positions.

    Keys are non-negative ints (visited bitstrings of any length).
    """

    def __init__(self, m: int = 1 << 20, k: int = 4):
        if m < 8 or k < 1:
            raise ValueError("bloom filter needs m >= 8 and k >= 1")
        self.m, self.k = m, k
        self.bits = bytearray((m + 7) // 8)
        self.count = 0

    def _positions(self, key: int) -> list[int]:
        # independent per-probe hashes; double hashing would cap the number
        # of distinct probe patterns at m*m/2 and put a floor under the FP rate
        h = _mix64(hash(key) & _M64)
        m = self.m
        return [_mix64(h + i) % m for i in range(self.k)]

    def __contains__(self, key: int) -> bool:
        bits = self.bits
        return all(bits[p >> 3] >> (p & 7) & 1 for p in self._positions(key))

    def add(self, key: int) -> bool:
        """Insert ``key``; returns True if it was not (apparently) present."""
        bits = self.bits
        new = False
        for p in self._positions(key):
            byte, bit = p >> 3, 1 << (p & 7)
            if not bits[byte] & bit:
                bits[byte] |= bit
                new = True
        if new:
            self.count += 1
        return new

    def analytic_fp_rate(self, n: int) -> float:
        return (1.0 - math.exp(-self.k * n / self.m)) ** self.k

    def fill(self) -> float:
        """Fraction of bits set."""
        return sum(bin(b).count("1") for b in self.bits) / self.m

    def fp_rate(self) -> float:
        """False-positive probability of the filter as it stands: (set bits / m) ** k."""
        return self.fill() ** self.k


class CoverageTracker:
    """Novelty decisions come from the bloom filter; the shadow set is only
    a fast path for keys already inserted (for which the filter would also
    answer "present", having no false negatives) and a record for reporting."""

    def __init__(self, total_actions: int, m: int = 1 << 20, k: int = 4):
        self.bloom = BloomFilter(m, k)
        self.shadow: set[int] = set()
        self.false_positive_keys: set[int] = set()
        self.false_positive_events = 0
        self.total_actions = total_actions
        self.full_mask = (1 << total_actions) - 1
        self.actions = 0

    def observe(self, visited: int):
        self.actions |= visited

    def is_novel(self, visited: int) -> bool:
        """Test-and-set for one visited bitstring."""
        if visited in self.shadow:
            return False
        if visited in self.bloom:
            self.false_positive_events += 1
            self.false_positive_keys.add(visited)
            return False
        self.bloom.add(visited)
        self.shadow.add(visited)
        return True

    @property
    def actions_covered(self) -> int:
        return bin(self.actions).count("1")

    @property
    def paths_covered(self) -> int:
        return len(self.shadow)

    @property
    def full(self) -> bool:
        return self.actions == self.full_mask

    def false_negatives(self) -> int:
        return sum(1 for key in self.shadow if key not in self.bloom)

    def measured_fp_rate(self, probes: int = 100_000, seed: int = 0, key_bits: int = 64) -> float:
        """Fraction of fresh random keys (outside the shadow set) the filter claims to hold."""
        rng = random.Random(seed)
        hits = tried = 0
        while tried < probes:
            key = rng.getrandbits(key_bits) | 1 << key_bits  # disjoint from real bitstrings
            if key in self.shadow:
                continue
            tried += 1
            hits += key in self.bloom
        return hits / probes if probes else 0.0

    def fp_rate(self) -> float:
        return self.bloom.fp_rate()

    def analytic_fp_rate(self) -> float:
        return self.bloom.analytic_fp_rate(len(self.shadow))

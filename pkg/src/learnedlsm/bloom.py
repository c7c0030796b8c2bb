"""Per-file blocked bloom filter.

A key hashes (blake2b, 64 bits) to one 512-bit block and to a double-hashing
pattern ``a, a + b, ..., a + (k-1) b (mod 512)`` inside it, with ``a`` any bit
and ``b`` one of 64 odd strides. Patterns are precomputed as integer masks,
so a membership test is one hash, one table lookup and one mask compare.
Encoding: ``k u8 | blocks of 64 bytes``.
"""

from __future__ import annotations

import hashlib
import math
from functools import lru_cache

from .errors import CorruptionError

DEFAULT_BITS_PER_KEY = 10
DEFAULT_HASHES = 7
BLOCK_BYTES = 64
BLOCK_BITS = BLOCK_BYTES * 8
MAX_HASHES = 16
_PATTERN_BITS = 15  # 9 bits of start, 6 bits of stride
_PATTERN_MASK = (1 << _PATTERN_BITS) - 1
_blake2b = hashlib.blake2b


@lru_cache(maxsize=None)
def _patterns(k: int) -> tuple[int, ...]:
    out = []
    for p in range(1 << _PATTERN_BITS):
        a, b = p & 511, 2 * (p >> 9) + 1
        mask = 0
        for j in range(k):
            mask |= 1 << ((a + j * b) & 511)
        out.append(mask)
    return tuple(out)


def _probe(key: bytes, nblocks: int, patterns: tuple[int, ...]) -> tuple[int, int]:
    """``(block index, bit mask)`` for ``key``."""
    h = int.from_bytes(_blake2b(key, digest_size=8).digest(), "little")
    return (h >> _PATTERN_BITS) % nblocks, patterns[h & _PATTERN_MASK]


class BloomFilter:
    __slots__ = ("bits", "nblocks", "k", "_words", "_patterns")

    def __init__(self, bits: bytes, k: int):
        if len(bits) % BLOCK_BYTES:
            raise CorruptionError("filter length is not a whole number of blocks")
        if not 1 <= k <= MAX_HASHES:
            raise CorruptionError(f"filter hash count {k} out of range")
        self.bits = bytes(bits)
        self.nblocks = len(self.bits) // BLOCK_BYTES
        self.k = k
        self._patterns = _patterns(k)
        # Blocks as integers so a probe is a single mask test.
        b = self.bits
        self._words = [int.from_bytes(b[i : i + BLOCK_BYTES], "little") for i in range(0, len(b), BLOCK_BYTES)]

    @classmethod
    def build(cls, keys, bits_per_key: int = DEFAULT_BITS_PER_KEY, k: int = DEFAULT_HASHES) -> "BloomFilter":
        keys = list(keys)
        nblocks = max(1, math.ceil(len(keys) * bits_per_key / BLOCK_BITS))
        words = [0] * nblocks
        patterns = _patterns(k)
        for key in keys:
            blk, mask = _probe(key, nblocks, patterns)
            words[blk] |= mask
        return cls(b"".join(w.to_bytes(BLOCK_BYTES, "little") for w in words), k)

    def may_contain(self, key: bytes) -> bool:
        blk, mask = _probe(key, self.nblocks, self._patterns)
        return self._words[blk] & mask == mask

    def encode(self) -> bytes:
        return bytes([self.k]) + self.bits

    @classmethod
    def decode(cls, raw: bytes) -> "BloomFilter":
        if len(raw) < 1 + BLOCK_BYTES:
            raise CorruptionError("bad filter block")
        return cls(raw[1:], raw[0])


def bloom_may_contain(filt: BloomFilter, key: bytes) -> bool:
    return filt.may_contain(key)

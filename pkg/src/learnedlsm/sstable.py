"""Sorted table files of fixed-size (key, value pointer) records.

Layout::

    [data blocks][index block][filter block][footer]

Data blocks hold ``block_size // record_size`` records each, packed back to
back, so record ``i`` always starts at byte ``i * record_size``. The index
block has one entry per data block, ``last_key | offset u64 | size u32``.
The footer is ``index_off u64 | index_len u32 | filter_off u64 |
filter_len u32 | b"BSST"``. Integers are little-endian, keys big-endian.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Iterator, Optional

from .bloom import DEFAULT_BITS_PER_KEY, DEFAULT_HASHES, BloomFilter
from .errors import CorruptionError, InvalidInputError

if TYPE_CHECKING:
    from .plr import PLRModel

DEFAULT_BLOCK_SIZE = 4096
MAX_FILE_BYTES = 4 * 1024 * 1024
POINTER_SIZE = 16
TABLE_MAGIC = b"BSST"
_FOOTER = struct.Struct("<QIQI4s")
_INDEX_TAIL = struct.Struct("<QI")
_POINTER = struct.Struct("<IQI")
_OFFSET_MASK = (1 << 56) - 1

FLAG_TOMBSTONE = 0x01


@dataclass(frozen=True, slots=True)
class ValuePointer:
    vlog_file_id: int
    offset: int
    length: int
    flags: int = 0

    @property
    def is_tombstone(self) -> bool:
        return bool(self.flags & FLAG_TOMBSTONE)

    def encode(self) -> bytes:
        # Offset is stored in the low 56 bits, flags in the top byte.
        if self.offset > _OFFSET_MASK:
            raise InvalidInputError(f"value offset {self.offset} exceeds 56 bits")
        return _POINTER.pack(self.vlog_file_id, self.offset | (self.flags << 56), self.length)

    @classmethod
    def decode(cls, raw: bytes) -> "ValuePointer":
        fid, packed, length = _POINTER.unpack(raw)
        return cls(fid, packed & _OFFSET_MASK, length, packed >> 56)


TOMBSTONE = ValuePointer(0, 0, 0, FLAG_TOMBSTONE)
TOMBSTONE_BYTES = TOMBSTONE.encode()


def unpack_pointer(raw: bytes) -> tuple[int, int, int]:
    """``(vlog_file_id, offset, length)`` without building a ValuePointer."""
    fid, packed, length = _POINTER.unpack(raw)
    return fid, packed & _OFFSET_MASK, length


def pointer_is_tombstone(raw: bytes) -> bool:
    return bool(raw[11] & FLAG_TOMBSTONE)


def record_size(key_size: int) -> int:
    return key_size + POINTER_SIZE


@dataclass(eq=False)
class SSTableMeta:
    file_id: int
    level: int
    min_key: bytes
    max_key: bytes
    record_count: int
    file_size: int = 0
    seq: int = 0
    created_at: float = 0.0
    # Swapped in atomically once a model is trained for this file.
    model: Optional["PLRModel"] = field(default=None, repr=False)
    # Open, cached contents; set by the store when the file goes live.
    table: Optional["Table"] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.min_key > self.max_key:
            raise InvalidInputError("min_key > max_key")
        if self.record_count <= 0:
            raise InvalidInputError("empty sstable")

    def contains(self, key: bytes) -> bool:
        return self.min_key <= key <= self.max_key


def table_path(dirname: str, file_id: int) -> str:
    return os.path.join(dirname, f"{file_id:06d}.sst")


def model_path(dirname: str, file_id: int) -> str:
    return os.path.join(dirname, f"{file_id:06d}.model")


def build_sstable(
    records: Iterable[tuple[bytes, bytes]],
    path: str,
    *,
    key_size: int,
    file_id: int = 0,
    level: int = 0,
    block_size: int = DEFAULT_BLOCK_SIZE,
    bits_per_key: int = DEFAULT_BITS_PER_KEY,
    max_file_bytes: Optional[int] = None,
) -> SSTableMeta:
    """Write ``(key, encoded pointer)`` records, strictly ascending, to ``path``."""
    rs = record_size(key_size)
    per_block = block_size // rs
    if per_block < 1:
        raise InvalidInputError("block size smaller than one record")
    data = bytearray()
    keys: list[bytes] = []
    prev = None
    for key, ptr in records:
        if len(key) != key_size or len(ptr) != POINTER_SIZE:
            raise InvalidInputError("record has wrong key or pointer width")
        if prev is not None and key <= prev:
            raise InvalidInputError("records must be strictly ascending by key")
        data += key
        data += ptr
        keys.append(key)
        prev = key
    if not keys:
        raise InvalidInputError("cannot build an empty sstable")
    if max_file_bytes is not None and len(data) > max_file_bytes:
        raise InvalidInputError(f"{len(data)} data bytes exceed the {max_file_bytes} byte file limit")

    index = bytearray()
    n = len(keys)
    for b in range(0, n, per_block):
        last = min(b + per_block, n) - 1
        index += keys[last]
        index += _INDEX_TAIL.pack(b * rs, (last - b + 1) * rs)
    filt = BloomFilter.build(keys, bits_per_key, DEFAULT_HASHES).encode()
    index_off = len(data)
    filter_off = index_off + len(index)
    footer = _FOOTER.pack(index_off, len(index), filter_off, len(filt), TABLE_MAGIC)
    blob = bytes(data) + bytes(index) + filt + footer

    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)
    return SSTableMeta(file_id, level, keys[0], keys[-1], n, len(blob))


class Table:
    """An open, fully cached sstable."""

    def __init__(self, path: str, key_size: int, block_size: int = DEFAULT_BLOCK_SIZE):
        with open(path, "rb") as fh:
            buf = fh.read()
        self._init(buf, key_size, block_size, path)

    @classmethod
    def from_bytes(cls, buf: bytes, key_size: int, block_size: int = DEFAULT_BLOCK_SIZE) -> "Table":
        t = cls.__new__(cls)
        t._init(buf, key_size, block_size, "<memory>")
        return t

    def _init(self, buf: bytes, key_size: int, block_size: int, path: str) -> None:
        if len(buf) < _FOOTER.size:
            raise CorruptionError(f"{path}: file shorter than footer")
        index_off, index_len, filter_off, filter_len, magic = _FOOTER.unpack_from(buf, len(buf) - _FOOTER.size)
        if magic != TABLE_MAGIC:
            raise CorruptionError(f"{path}: bad table magic")
        if index_off + index_len != filter_off or filter_off + filter_len != len(buf) - _FOOTER.size:
            raise CorruptionError(f"{path}: inconsistent footer offsets")
        self.path = path
        self.key_size = key_size
        self.record_size = rs = record_size(key_size)
        self.per_block = block_size // rs
        self.entry_size = key_size + _INDEX_TAIL.size
        if index_len % self.entry_size or index_len == 0:
            raise CorruptionError(f"{path}: index block length {index_len} not a multiple of entry size")
        if index_off % rs:
            raise CorruptionError(f"{path}: data region not a whole number of records")
        self.buf = buf
        self.index_block = buf[index_off : index_off + index_len]
        self.filter = BloomFilter.decode(buf[filter_off : filter_off + filter_len])
        self.num_blocks = index_len // self.entry_size
        self.record_count = index_off // rs
        self.data_len = index_off
        if self.num_blocks != -(-self.record_count // self.per_block):
            raise CorruptionError(f"{path}: index block does not match data size")
        self.min_key = buf[0:key_size]
        self.max_key = buf[(self.record_count - 1) * rs : (self.record_count - 1) * rs + key_size]

    # -- index block ---------------------------------------------------

    def index_entry(self, i: int) -> tuple[bytes, int, int]:
        es = self.entry_size
        ks = self.key_size
        base = i * es
        raw = self.index_block
        off, size = _INDEX_TAIL.unpack_from(raw, base + ks)
        return raw[base : base + ks], off, size

    def search_index_block(self, key: bytes) -> int:
        """Index of the first block whose last key is >= key, or -1 if key is past the file."""
        raw = self.index_block
        es = self.entry_size
        ks = self.key_size
        lo, hi = 0, self.num_blocks
        while lo < hi:
            mid = (lo + hi) >> 1
            b = mid * es
            if raw[b : b + ks] < key:
                lo = mid + 1
            else:
                hi = mid
        return lo if lo < self.num_blocks else -1

    def load_block(self, i: int) -> bytes:
        _, off, size = self.index_entry(i)
        if off + size > self.data_len:
            raise CorruptionError(f"{self.path}: block {i} runs past data region")
        return self.buf[off : off + size]

    # -- record access -------------------------------------------------

    def load_range(self, lo: int, hi: int) -> bytes:
        """Records ``lo..hi`` inclusive as one contiguous chunk."""
        if lo < 0 or hi >= self.record_count or lo > hi:
            raise InvalidInputError(f"record range [{lo}, {hi}] outside file of {self.record_count}")
        rs = self.record_size
        pb = self.per_block
        first, last = lo // pb, hi // pb
        if first == last:
            return self.buf[lo * rs : (hi + 1) * rs]
        # Range crosses block boundaries: assemble from the index entries.
        parts = []
        for b in range(first, last + 1):
            _, off, size = self.index_entry(b)
            start = max(off, lo * rs)
            end = min(off + size, (hi + 1) * rs)
            parts.append(self.buf[start:end])
        return b"".join(parts)

    def key_at(self, i: int) -> bytes:
        b = i * self.record_size
        return self.buf[b : b + self.key_size]

    def pointer_at(self, i: int) -> bytes:
        b = i * self.record_size + self.key_size
        return self.buf[b : b + POINTER_SIZE]

    def keys(self) -> list[bytes]:
        rs, ks, buf = self.record_size, self.key_size, self.buf
        return [buf[b : b + ks] for b in range(0, self.data_len, rs)]

    def int_keys(self) -> list[int]:
        rs, ks, buf = self.record_size, self.key_size, self.buf
        frm = int.from_bytes
        return [frm(buf[b : b + ks], "big") for b in range(0, self.data_len, rs)]

    def __iter__(self) -> Iterator[tuple[bytes, bytes]]:
        return self.iter_from(0)

    def iter_from(self, index: int) -> Iterator[tuple[bytes, bytes]]:
        rs, ks, buf = self.record_size, self.key_size, self.buf
        for b in range(index * rs, self.data_len, rs):
            yield buf[b : b + ks], buf[b + ks : b + rs]

    def lower_bound(self, key: bytes) -> int:
        """First record index whose key is >= key (record_count if none)."""
        blk = self.search_index_block(key)
        if blk < 0:
            return self.record_count
        base = blk * self.per_block
        chunk = self.load_block(blk)
        return base + chunk_lower_bound(chunk, key, 0, len(chunk) // self.record_size, self.record_size, self.key_size)


def chunk_lower_bound(chunk: bytes, key: bytes, lo: int, hi: int, rs: int, ks: int) -> int:
    while lo < hi:
        mid = (lo + hi) >> 1
        b = mid * rs
        if chunk[b : b + ks] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


def search_index_block(table: Table, key: bytes) -> int:
    return table.search_index_block(key)


def load_block_range(table: Table, lo: int, hi: int) -> bytes:
    return table.load_range(lo, hi)

"""Append-only value log.

Record layout: ``crc32 u32 | key | value_len u32 | value``; the crc covers
everything after itself. A value pointer addresses the record start and
carries the value length.
"""

from __future__ import annotations

import os
import struct
import threading
import zlib

from .errors import CorruptionError, InvalidInputError, InvalidPointerError
from .sstable import ValuePointer

_U32 = struct.Struct("<I")
MAX_VALUE_LEN = 2**32 - 2


def vlog_path(dirname: str, file_id: int) -> str:
    return os.path.join(dirname, f"{file_id:06d}.vlog")


def record_bytes(key_size: int, value_len: int) -> int:
    return 4 + key_size + 4 + value_len


class ValueLog:
    """One value-log file: a single appender plus any number of readers."""

    def __init__(self, path: str, file_id: int, key_size: int, writable: bool = True):
        self.path = path
        self.file_id = file_id
        self.key_size = key_size
        self._lock = threading.Lock()
        self._writer = open(path, "ab") if writable else None
        self._fd = os.open(path, os.O_RDONLY | os.O_CREAT, 0o644)
        self._end = os.fstat(self._fd).st_size

    @property
    def size(self) -> int:
        return self._end

    def append(self, key: bytes, value: bytes) -> ValuePointer:
        if self._writer is None:
            raise InvalidInputError("value log opened read-only")
        if len(key) != self.key_size:
            raise InvalidInputError(f"key must be {self.key_size} bytes")
        if len(value) > MAX_VALUE_LEN:
            raise InvalidInputError("value too large")
        body = key + _U32.pack(len(value)) + value
        rec = _U32.pack(zlib.crc32(body)) + body
        with self._lock:
            off = self._end
            self._writer.write(rec)
            self._end += len(rec)
        return ValuePointer(self.file_id, off, len(value))

    def flush(self) -> None:
        if self._writer is not None:
            with self._lock:
                self._writer.flush()

    def sync(self) -> None:
        if self._writer is not None:
            with self._lock:
                self._writer.flush()
                os.fsync(self._writer.fileno())

    def read(self, ptr: ValuePointer) -> tuple[bytes, bytes]:
        return self.read_at(ptr.offset, ptr.length)

    def read_at(self, offset: int, length: int) -> tuple[bytes, bytes]:
        ks = self.key_size
        total = 8 + ks + length
        if offset + total > self._end:
            raise InvalidPointerError(f"record at {offset} (+{total}) beyond end of {self.path} ({self._end} bytes)")
        raw = os.pread(self._fd, total, offset)
        if len(raw) < total and self._writer is not None:
            # Tail still sitting in the userspace buffer.
            self.flush()
            raw = os.pread(self._fd, total, offset)
        if len(raw) != total:
            raise InvalidPointerError(f"short read at {offset} in {self.path}")
        if zlib.crc32(raw[4:]) != _U32.unpack_from(raw, 0)[0]:
            raise CorruptionError(f"value log checksum mismatch at offset {offset}")
        if _U32.unpack_from(raw, 4 + ks)[0] != length:
            raise CorruptionError(f"value length disagrees with pointer length {length}")
        return raw[4 : 4 + ks], raw[8 + ks :]

    def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            self._writer = None
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1


def vlog_append(log: ValueLog, key: bytes, value: bytes) -> ValuePointer:
    return log.append(key, value)


def vlog_read(log: ValueLog, ptr: ValuePointer) -> tuple[bytes, bytes]:
    return log.read(ptr)

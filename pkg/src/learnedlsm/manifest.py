"""Durable log of version edits.

Each record is ``length u32 | crc32 u32 | payload``. Payload kinds:

* add-file:  ``1 | level u8 | file_id u64 | records u64 | file_size u64 | seq u64 | key_len u8 | min | max``
* delete-file: ``2 | level u8 | file_id u64``
* counters: ``3 | next_file_id u64 | last_seq u64 | key_size u16``

Replay stops at the first truncated or checksum-failing record.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass
from typing import Iterator, Union

from .errors import InvalidInputError
from .sstable import SSTableMeta
from .version import NUM_LEVELS, Version

_FRAME = struct.Struct("<II")
_ADD = struct.Struct("<BBQQQQB")
_DEL = struct.Struct("<BBQ")
_CTR = struct.Struct("<BQQH")

ADD, DELETE, COUNTERS = 1, 2, 3


@dataclass(frozen=True)
class AddFile:
    meta: SSTableMeta


@dataclass(frozen=True)
class DeleteFile:
    file_id: int
    level: int


@dataclass(frozen=True)
class Counters:
    next_file_id: int
    last_seq: int
    key_size: int


Edit = Union[AddFile, DeleteFile, Counters]


def encode_edit(edit: Edit) -> bytes:
    if isinstance(edit, AddFile):
        m = edit.meta
        return _ADD.pack(ADD, m.level, m.file_id, m.record_count, m.file_size, m.seq, len(m.min_key)) + m.min_key + m.max_key
    if isinstance(edit, DeleteFile):
        return _DEL.pack(DELETE, edit.level, edit.file_id)
    if isinstance(edit, Counters):
        return _CTR.pack(COUNTERS, edit.next_file_id, edit.last_seq, edit.key_size)
    raise InvalidInputError(f"unknown edit {edit!r}")


def decode_edit(payload: bytes) -> Edit:
    kind = payload[0]
    if kind == ADD:
        _, level, fid, count, size, seq, klen = _ADD.unpack_from(payload, 0)
        off = _ADD.size
        lo = payload[off : off + klen]
        hi = payload[off + klen : off + 2 * klen]
        return AddFile(SSTableMeta(fid, level, lo, hi, count, size, seq))
    if kind == DELETE:
        _, level, fid = _DEL.unpack(payload)
        return DeleteFile(fid, level)
    if kind == COUNTERS:
        _, nfid, seq, ks = _CTR.unpack(payload)
        return Counters(nfid, seq, ks)
    raise ValueError(f"unknown edit kind {kind}")


def frame(payload: bytes) -> bytes:
    return _FRAME.pack(len(payload), zlib.crc32(payload)) + payload


def iter_edits(data: bytes) -> Iterator[Edit]:
    off = 0
    while off + _FRAME.size <= len(data):
        length, crc = _FRAME.unpack_from(data, off)
        start = off + _FRAME.size
        payload = data[start : start + length]
        if len(payload) < length or zlib.crc32(payload) != crc or length == 0:
            return
        try:
            edit = decode_edit(payload)
        except (ValueError, struct.error):
            return
        yield edit
        off = start + length


class Manifest:
    def __init__(self, path: str, sync: bool = False):
        self.path = path
        self.sync = sync
        self._fh = open(path, "ab")

    def append(self, *edits: Edit) -> None:
        """Write edits as one batch; each is framed individually."""
        self._fh.write(b"".join(frame(encode_edit(e)) for e in edits))
        self._fh.flush()
        if self.sync:
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()


@dataclass
class ReplayResult:
    levels: list[dict[int, SSTableMeta]]
    next_file_id: int = 1
    last_seq: int = 0
    key_size: int = 0
    edits: int = 0

    @property
    def version(self) -> Version:
        return Version([list(files.values()) for files in self.levels])


def manifest_replay(path: str) -> ReplayResult:
    result = ReplayResult([{} for _ in range(NUM_LEVELS)])
    if not os.path.exists(path):
        return result
    with open(path, "rb") as fh:
        data = fh.read()
    for edit in iter_edits(data):
        result.edits += 1
        if isinstance(edit, AddFile):
            result.levels[edit.meta.level][edit.meta.file_id] = edit.meta
        elif isinstance(edit, DeleteFile):
            result.levels[edit.level].pop(edit.file_id, None)
        else:
            result.next_file_id = edit.next_file_id
            result.last_seq = edit.last_seq
            result.key_size = edit.key_size
    return result


def manifest_append(manifest: Manifest, edit: Edit) -> None:
    manifest.append(edit)

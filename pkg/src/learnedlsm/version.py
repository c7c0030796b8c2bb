"""Immutable snapshot of the live files per level."""

from __future__ import annotations

from bisect import bisect_left
from typing import Iterable, Optional, Sequence

from .errors import InvalidInputError
from .sstable import SSTableMeta

NUM_LEVELS = 7


class Version:
    """Live files arranged by level.

    L0 files are kept newest first (by sequence number) and may overlap.
    Deeper levels are sorted by ``min_key`` and key-disjoint. Each level
    carries an epoch that changes whenever its file set changes.
    """

    __slots__ = ("levels", "epochs", "_max_keys", "_deep", "_bytes")

    def __init__(self, levels: Sequence[Sequence[SSTableMeta]] = (), epochs: Optional[Sequence[int]] = None):
        lv = [list(files) for files in levels] + [[] for _ in range(NUM_LEVELS - len(levels))]
        lv[0].sort(key=lambda m: (m.seq, m.file_id), reverse=True)
        for files in lv[1:]:
            files.sort(key=lambda m: m.min_key)
        self.levels: tuple[tuple[SSTableMeta, ...], ...] = tuple(tuple(f) for f in lv)
        self.epochs: tuple[int, ...] = tuple(epochs) if epochs is not None else (0,) * NUM_LEVELS
        self._max_keys = tuple([m.max_key for m in files] for files in self.levels)
        self._bytes = tuple(sum(m.file_size for m in files) for files in self.levels)
        self._deep = tuple((files, self._max_keys[i]) for i, files in enumerate(self.levels) if i and files)

    def apply(self, added: Iterable[SSTableMeta] = (), deleted: Iterable[tuple[int, int]] = ()) -> "Version":
        """New version with ``added`` files and ``(level, file_id)`` deletions applied."""
        levels = [dict((m.file_id, m) for m in files) for files in self.levels]
        epochs = list(self.epochs)
        for level, fid in deleted:
            if levels[level].pop(fid, None) is None:
                raise InvalidInputError(f"file {fid} not live at level {level}")
            epochs[level] += 1
        for meta in added:
            if meta.file_id in levels[meta.level]:
                raise InvalidInputError(f"file {meta.file_id} already live at level {meta.level}")
            levels[meta.level][meta.file_id] = meta
            epochs[meta.level] += 1
        return Version([list(d.values()) for d in levels], epochs)

    def files(self) -> Iterable[SSTableMeta]:
        for files in self.levels:
            yield from files

    def file_ids(self) -> set[int]:
        return {m.file_id for m in self.files()}

    def level_bytes(self, level: int) -> int:
        return self._bytes[level]

    def level_records(self, level: int) -> int:
        return sum(m.record_count for m in self.levels[level])

    def file_in_level(self, level: int, key: bytes) -> Optional[SSTableMeta]:
        files = self.levels[level]
        i = bisect_left(self._max_keys[level], key)
        if i < len(files) and files[i].min_key <= key:
            return files[i]
        return None

    def find_files(self, key: bytes) -> list[SSTableMeta]:
        """Candidate files for ``key``: overlapping L0 files newest first, then one per deeper level."""
        l0 = self.levels[0]
        out = [m for m in l0 if m.min_key <= key <= m.max_key] if l0 else []
        for files, max_keys in self._deep:
            i = bisect_left(max_keys, key)
            if i < len(files) and files[i].min_key <= key:
                out.append(files[i])
        return out

    def overlapping(self, level: int, lo: bytes, hi: bytes) -> list[SSTableMeta]:
        return [m for m in self.levels[level] if m.min_key <= hi and m.max_key >= lo]

    def check(self) -> None:
        """Raise if the level invariants are broken."""
        seen = set()
        for level, files in enumerate(self.levels):
            for m in files:
                if m.level != level:
                    raise AssertionError(f"file {m.file_id} records level {m.level} but sits in {level}")
                if m.file_id in seen:
                    raise AssertionError(f"file {m.file_id} appears twice")
                seen.add(m.file_id)
            if level >= 1:
                for a, b in zip(files, files[1:]):
                    if not a.max_key < b.min_key:
                        raise AssertionError(f"level {level}: files {a.file_id} and {b.file_id} overlap or are unsorted")

    def summary(self) -> list[tuple[int, int, int]]:
        """``(files, records, bytes)`` per level."""
        return [(len(f), sum(m.record_count for m in f), sum(m.file_size for m in f)) for f in self.levels]


def find_files(version: Version, key: bytes) -> list[SSTableMeta]:
    return version.find_files(key)

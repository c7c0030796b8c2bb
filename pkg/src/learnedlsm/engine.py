"""Leveled LSM store with value separation and learned per-file lookups.

Writes append the value to a value log and put ``key -> pointer`` in the
memtable. A full memtable is flushed to an L0 table; compaction merges
tables down the levels. Gets probe the memtable, then candidate tables
newest first, taking the model path for any table (or level) that has a
model attached and the baseline path otherwise.

Two scheduling modes:

* ``background=True``: compaction and learning run on their own threads.
* ``background=False`` (inline): after every public operation the store runs
  pending compactions and learning on the calling thread. Time spent there
  is accounted separately (``maintenance_seconds``) so callers can separate
  foreground latency from background work deterministically.
"""

from __future__ import annotations

import glob
import heapq
import logging
import os
import threading
import time
from bisect import bisect_left
from collections import defaultdict
from dataclasses import dataclass, field
from time import perf_counter
from typing import Iterable, Iterator, Optional

from .cba import CostBenefitAnalyzer, calibrate_cost_per_point
from .clock import MonotonicClock
from .errors import CorruptionError, InvalidInputError, StoreError
from .keys import DEFAULT_KEY_SIZE
from .learner import CBA, CBA_MODES, FILE, LEARNING_MODES, LEVEL, Learner, LevelModel
from .lookup import (
    BOOKKEEPING,
    FIND_FILES,
    MEMTABLE,
    READ_VALUE,
    InternalLookupRecord,
    lookup_in_file_baseline,
    lookup_in_file_model,
    lookup_in_level_model,
)
from .manifest import AddFile, Counters, DeleteFile, Manifest, manifest_replay
from .plr import DEFAULT_DELTA, PLRModel, deserialize_model, serialize_model
from .sstable import (
    DEFAULT_BLOCK_SIZE,
    MAX_FILE_BYTES,
    TOMBSTONE_BYTES,
    SSTableMeta,
    Table,
    build_sstable,
    model_path,
    pointer_is_tombstone,
    record_size,
    table_path,
    unpack_pointer,
)
from .version import NUM_LEVELS, Version
from .vlog import ValueLog, vlog_path

log = logging.getLogger(__name__)

MB = 1024 * 1024
MANIFEST_NAME = "MANIFEST"
STATS_NAME = "STATS.tsv"


@dataclass
class Options:
    key_size: int = DEFAULT_KEY_SIZE
    delta: int = DEFAULT_DELTA
    # None selects the per-file estimated build time as the wait.
    t_wait_ms: Optional[float] = 50.0
    learning_mode: str = FILE
    cba_mode: str = CBA
    level_size_divisor: float = 1.0
    memtable_bytes: int = 4 * MB
    max_file_bytes: int = MAX_FILE_BYTES
    block_size: int = DEFAULT_BLOCK_SIZE
    bloom_bits_per_key: int = 10
    l0_compaction_trigger: int = 4
    l0_stop_writes: int = 12
    background: bool = True
    clock: object = None
    # Seconds of training per record; calibrated when None.
    cost_per_point: Optional[float] = None
    s_min: int = 10
    short_lived_factor: float = 2.0
    recheck_skipped: bool = True
    persist_models: bool = True
    sync: bool = False

    def validate(self) -> None:
        if self.learning_mode not in LEARNING_MODES:
            raise InvalidInputError(f"learning_mode must be one of {LEARNING_MODES}")
        if self.cba_mode not in CBA_MODES:
            raise InvalidInputError(f"cba_mode must be one of {CBA_MODES}")
        if self.delta < 1:
            raise InvalidInputError("delta must be >= 1")
        if self.key_size < 1 or self.key_size > 16:
            raise InvalidInputError("key_size must be 1..16 bytes")
        if self.level_size_divisor <= 0:
            raise InvalidInputError("level_size_divisor must be positive")
        if self.t_wait_ms is not None and self.t_wait_ms < 0:
            raise InvalidInputError("t_wait_ms must be >= 0")
        if self.max_file_bytes < record_size(self.key_size):
            raise InvalidInputError("max_file_bytes smaller than one record")

    def echo(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "clock"}
        out["t_wait_ms"] = "auto" if self.t_wait_ms is None else self.t_wait_ms
        return out


class MemTable:
    """Unsorted dict of ``key -> (pointer bytes, seq)``; sorted on demand."""

    __slots__ = ("entries", "record_size", "_sorted")

    def __init__(self, record_size: int):
        self.entries: dict[bytes, tuple[bytes, int]] = {}
        self.record_size = record_size
        self._sorted: Optional[list[bytes]] = None

    def put(self, key: bytes, ptr: bytes, seq: int) -> None:
        if self._sorted is not None and key not in self.entries:
            self._sorted = None
        self.entries[key] = (ptr, seq)

    def get(self, key: bytes) -> Optional[tuple[bytes, int]]:
        return self.entries.get(key)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def approximate_bytes(self) -> int:
        return len(self.entries) * self.record_size

    def sorted_keys(self) -> list[bytes]:
        s = self._sorted
        if s is None:
            s = self._sorted = sorted(self.entries)
        return s

    def items_from(self, start: bytes) -> Iterator[tuple[bytes, bytes]]:
        keys = self.sorted_keys()
        entries = self.entries
        for i in range(bisect_left(keys, start), len(keys)):
            k = keys[i]
            yield k, entries[k][0]

    def max_seq(self) -> int:
        return max((s for _, s in self.entries.values()), default=0)


@dataclass
class CompactionJob:
    level: int
    inputs: list[SSTableMeta]
    next_inputs: list[SSTableMeta]

    @property
    def output_level(self) -> int:
        return self.level + 1

    def all_inputs(self) -> list[SSTableMeta]:
        return self.inputs + self.next_inputs


@dataclass
class LookupMetrics:
    gets: int = 0
    found: int = 0
    internal: dict = field(default_factory=dict)  # (path, positive) -> count
    step_seconds: dict = field(default_factory=lambda: defaultdict(float))

    def reset(self) -> None:
        self.gets = 0
        self.found = 0
        self.internal.clear()
        self.step_seconds.clear()


@dataclass
class StoreCounters:
    puts: int = 0
    deletes: int = 0
    scans: int = 0
    flushes: int = 0
    compactions: int = 0
    flush_seconds: float = 0.0
    compaction_seconds: float = 0.0
    maintenance_seconds: float = 0.0
    bytes_compacted: int = 0
    stall_seconds: float = 0.0


class Store:
    def __init__(self, path: str, options: Optional[Options] = None, *, create_if_missing: bool = True, error_if_exists: bool = False):
        self.options = opts = options or Options()
        opts.validate()
        self.path = path
        self.clock = opts.clock or MonotonicClock()
        exists = os.path.exists(os.path.join(path, MANIFEST_NAME))
        if exists and error_if_exists:
            raise InvalidInputError(f"store already exists at {path}")
        if not exists:
            if not create_if_missing:
                raise InvalidInputError(f"no store at {path}")
            os.makedirs(path, exist_ok=True)

        self._lock = threading.RLock()
        self._cv = threading.Condition(self._lock)
        self._wlock = threading.RLock()
        self._closed = False
        self._in_maintain = False
        self._inline = not opts.background
        self._level_mode = opts.learning_mode == LEVEL
        self._dirty = True
        self.use_models = True
        self.metrics = LookupMetrics()
        self.counters = StoreCounters()
        self._compact_pointer: list[Optional[bytes]] = [None] * NUM_LEVELS
        self._level_models: list[Optional[LevelModel]] = [None] * NUM_LEVELS
        self._live: dict[int, SSTableMeta] = {}

        replay = manifest_replay(os.path.join(path, MANIFEST_NAME))
        if replay.edits and replay.key_size and replay.key_size != opts.key_size:
            if options is not None and options.key_size != DEFAULT_KEY_SIZE:
                raise InvalidInputError(f"store uses {replay.key_size}-byte keys, not {options.key_size}")
            opts.key_size = replay.key_size
        self.key_size = ks = opts.key_size
        self.record_size = record_size(ks)
        self._next_file_id = max(replay.next_file_id, 1)
        self._seq = replay.last_seq

        cpp = opts.cost_per_point if opts.cost_per_point is not None else calibrate_cost_per_point()
        t_wait = None if opts.t_wait_ms is None else opts.t_wait_ms / 1000.0
        short_lived = opts.short_lived_factor * (t_wait if t_wait is not None else cpp * opts.max_file_bytes / self.record_size)
        self.cba = CostBenefitAnalyzer(cpp, short_lived, opts.s_min)
        self.learner = Learner(
            self,
            self.cba,
            self.clock,
            t_wait=t_wait,
            delta=opts.delta,
            learning_mode=opts.learning_mode,
            cba_mode=opts.cba_mode,
            recheck=opts.recheck_skipped,
        )

        # Value logs: every old one read-only, a fresh one for this session.
        self._vlogs: dict[int, ValueLog] = {}
        max_vlog = 0
        for p in glob.glob(os.path.join(path, "*.vlog")):
            fid = int(os.path.basename(p).split(".")[0])
            self._vlogs[fid] = ValueLog(p, fid, ks, writable=False)
            max_vlog = max(max_vlog, fid)
        self._vlog = ValueLog(vlog_path(path, max_vlog + 1), max_vlog + 1, ks, writable=True)
        self._vlogs[self._vlog.file_id] = self._vlog

        version = self._recover(replay.version)
        self._manifest = Manifest(os.path.join(path, MANIFEST_NAME), sync=opts.sync)
        if not replay.edits:
            self._manifest.append(self._counters_edit())
        self._mem = MemTable(self.record_size)
        self._imm: Optional[MemTable] = None
        self._version = version
        self._publish()

        now = self.clock.now()
        for meta in version.files():
            self.cba.on_file_created(meta.file_id, meta.level, meta.record_count, now)
            if meta.model is None:
                self.learner.on_file_created(meta)
        for level in range(1, NUM_LEVELS):
            self.learner.on_level_changed(level, version.epochs[level], version.level_records(level))

        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        if opts.background:
            self._start_threads()

    # -- open / close --------------------------------------------------

    def _recover(self, version: Version) -> Version:
        live_ids = set()
        now = self.clock.now()
        for meta in version.files():
            table = Table(table_path(self.path, meta.file_id), self.key_size, self.options.block_size)
            if table.record_count != meta.record_count:
                raise CorruptionError(f"table {meta.file_id} has {table.record_count} records, manifest says {meta.record_count}")
            meta.table = table
            meta.created_at = now
            meta.model = self._load_model(meta)
            self._live[meta.file_id] = meta
            live_ids.add(meta.file_id)
        # Leftovers from an interrupted compaction or a deleted file.
        for pattern in ("*.sst", "*.model", "*.tmp"):
            for p in glob.glob(os.path.join(self.path, pattern)):
                stem = os.path.basename(p).split(".")[0]
                if pattern == "*.tmp" or not stem.isdigit() or int(stem) not in live_ids:
                    os.unlink(p)
        return version

    def _load_model(self, meta: SSTableMeta) -> Optional[PLRModel]:
        p = model_path(self.path, meta.file_id)
        if not os.path.exists(p):
            return None
        try:
            with open(p, "rb") as fh:
                model = deserialize_model(fh.read())
        except (CorruptionError, OSError) as exc:
            log.warning("discarding model for file %d: %s", meta.file_id, exc)
            return None
        if model.num_points != meta.record_count or model.min_key != int.from_bytes(meta.min_key, "big"):
            return None
        return model

    def _start_threads(self) -> None:
        t1 = threading.Thread(target=self._compaction_loop, name="compaction", daemon=True)
        t2 = threading.Thread(target=self.learner.run_background, args=(self._stop,), name="learner", daemon=True)
        self._threads = [t1, t2]
        for t in self._threads:
            t.start()

    def close(self) -> None:
        if self._closed:
            return
        with self._wlock:
            if len(self._mem):
                self.flush_memtable()
        self._stop.set()
        with self._cv:
            self._cv.notify_all()
        self.learner._wake.set()
        for t in self._threads:
            t.join()
        if not self.options.background:
            self.maintain(learn=False)
        self._closed = True
        with open(os.path.join(self.path, STATS_NAME), "w") as fh:
            fh.write(self.cba.dump())
        self._manifest.close()
        for v in self._vlogs.values():
            v.close()

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- state publication ---------------------------------------------

    def _publish(self) -> None:
        self._state = (self._mem, self._imm, self._version, tuple(self._level_models))

    @property
    def version(self) -> Version:
        return self._version

    def _counters_edit(self) -> Counters:
        return Counters(self._next_file_id, self._seq, self.key_size)

    def _new_file_id(self) -> int:
        with self._lock:
            fid = self._next_file_id
            self._next_file_id += 1
            return fid

    # -- writes --------------------------------------------------------

    def _check_key(self, key: bytes) -> None:
        if not isinstance(key, (bytes, bytearray)) or len(key) != self.key_size:
            raise InvalidInputError(f"key must be exactly {self.key_size} bytes")

    def put(self, key: bytes, value: bytes) -> None:
        self._check_key(key)
        with self._wlock:
            ptr = self._vlog.append(bytes(key), value)
            self._insert(bytes(key), ptr.encode())
            self.counters.puts += 1
        self._after_op()

    def put_many(self, items: Iterable[tuple[bytes, bytes]]) -> int:
        """Insert ``(key, value)`` pairs in order; maintenance runs once at the end."""
        n = 0
        append = self._vlog.append
        with self._wlock:
            for key, value in items:
                self._check_key(key)
                key = bytes(key)
                self._insert(key, append(key, value).encode())
                n += 1
            self.counters.puts += n
        self._after_op()
        return n

    def delete(self, key: bytes) -> None:
        self._check_key(key)
        with self._wlock:
            self._insert(bytes(key), TOMBSTONE_BYTES)
            self.counters.deletes += 1
        self._after_op()

    def _insert(self, key: bytes, ptr: bytes) -> None:
        self._seq += 1
        self._mem.put(key, ptr, self._seq)
        if self._mem.approximate_bytes >= self.options.memtable_bytes:
            self._stall_if_needed()
            self.flush_memtable()

    def _stall_if_needed(self) -> None:
        if not self.options.background:
            return
        t0 = perf_counter()
        with self._cv:
            while len(self._version.levels[0]) >= self.options.l0_stop_writes and not self._stop.is_set():
                self._cv.wait(0.1)
        self.counters.stall_seconds += perf_counter() - t0

    def flush_memtable(self) -> list[SSTableMeta]:
        """Write the memtable out as L0 table(s); returns the new metadata."""
        with self._wlock:
            if not len(self._mem):
                return []
            t0 = perf_counter()
            with self._lock:
                imm = self._imm = self._mem
                self._mem = MemTable(self.record_size)
                self._publish()
            self._vlog.flush()
            keys = imm.sorted_keys()
            entries = imm.entries
            seq = imm.max_seq()
            per_file = max(1, self.options.max_file_bytes // self.record_size)
            outputs = []
            for i in range(0, len(keys), per_file):
                chunk = keys[i : i + per_file]
                outputs.append(self._write_table(((k, entries[k][0]) for k in chunk), level=0, seq=seq))
            with self._lock:
                self._imm = None
                self._install(outputs, [])
            self.counters.flushes += 1
            self.counters.flush_seconds += perf_counter() - t0
            with self._cv:
                self._cv.notify_all()
            return outputs

    def _write_table(self, records, *, level: int, seq: int) -> SSTableMeta:
        fid = self._new_file_id()
        p = table_path(self.path, fid)
        meta = build_sstable(
            records,
            p,
            key_size=self.key_size,
            file_id=fid,
            level=level,
            block_size=self.options.block_size,
            bits_per_key=self.options.bloom_bits_per_key,
        )
        meta.seq = seq
        meta.table = Table(p, self.key_size, self.options.block_size)
        return meta

    def _install(self, added: list[SSTableMeta], deleted: list[SSTableMeta]) -> None:
        """Publish a version edit: manifest first, then level-model invalidation, then the version."""
        now = self.clock.now()
        edits = [AddFile(m) for m in added] + [DeleteFile(m.file_id, m.level) for m in deleted]
        edits.append(self._counters_edit())
        self._manifest.append(*edits)
        touched = {m.level for m in added} | {m.level for m in deleted}
        for level in touched:
            self._level_models[level] = None
        for m in added:
            m.created_at = now
        self._version = self._version.apply(added, [(m.level, m.file_id) for m in deleted])
        self._dirty = True
        for m in deleted:
            self._live.pop(m.file_id, None)
        for m in added:
            self._live[m.file_id] = m
        self._publish()
        # Obsolete files go after the new version is visible.
        for m in deleted:
            self.cba.on_file_deleted(m.file_id, now)
            for p in (table_path(self.path, m.file_id), model_path(self.path, m.file_id)):
                try:
                    os.unlink(p)
                except FileNotFoundError:
                    pass
        for m in added:
            self.cba.on_file_created(m.file_id, m.level, m.record_count, now)
            self.learner.on_file_created(m)
        for level in touched:
            if level > 0:
                self.learner.on_level_changed(level, self._version.epochs[level], self._version.level_records(level))

    # -- compaction ----------------------------------------------------

    def level_limit(self, level: int) -> float:
        return (10**level) * MB / self.options.level_size_divisor

    def pick_compaction(self, version: Optional[Version] = None) -> Optional[CompactionJob]:
        v = version or self._version
        l0 = v.levels[0]
        if len(l0) >= self.options.l0_compaction_trigger:
            lo = min(m.min_key for m in l0)
            hi = max(m.max_key for m in l0)
            return CompactionJob(0, list(l0), v.overlapping(1, lo, hi))
        best, best_score = None, 1.0
        for level in range(1, NUM_LEVELS - 1):
            score = v.level_bytes(level) / self.level_limit(level)
            if score > best_score:
                best, best_score = level, score
        if best is None:
            return None
        files = v.levels[best]
        ptr = self._compact_pointer[best]
        victim = files[0]
        if ptr is not None:
            for m in files:
                if m.min_key > ptr:
                    victim = m
                    break
        return CompactionJob(best, [victim], v.overlapping(best + 1, victim.min_key, victim.max_key))

    def compact(self, job: CompactionJob) -> list[SSTableMeta]:
        """Merge the job's inputs into the next level; returns the output files."""
        t0 = perf_counter()
        out_level = job.output_level
        # Lower precedence number wins on duplicate keys.
        sources = []
        if job.level == 0:
            for prec, m in enumerate(sorted(job.inputs, key=lambda m: (m.seq, m.file_id), reverse=True)):
                sources.append(_tagged(m.table, prec))
        else:
            sources.append(_tagged_chain(job.inputs, 0))
        sources.append(_tagged_chain(job.next_inputs, len(sources)))
        version = self._version
        deeper = range(out_level + 1, NUM_LEVELS)

        def live_records():
            last = None
            for key, _, ptr in heapq.merge(*sources):
                if key == last:
                    continue
                last = key
                if pointer_is_tombstone(ptr) and all(version.file_in_level(l, key) is None for l in deeper):
                    continue
                yield key, ptr

        per_file = max(1, self.options.max_file_bytes // self.record_size)
        seq = max((m.seq for m in job.all_inputs()), default=0)
        outputs: list[SSTableMeta] = []
        batch: list[tuple[bytes, bytes]] = []
        try:
            for rec in live_records():
                batch.append(rec)
                if len(batch) == per_file:
                    outputs.append(self._write_table(batch, level=out_level, seq=seq))
                    batch = []
            if batch:
                outputs.append(self._write_table(batch, level=out_level, seq=seq))
        except BaseException:
            for m in outputs:
                os.unlink(table_path(self.path, m.file_id))
            raise
        with self._lock:
            self._install(outputs, job.all_inputs())
            if job.level > 0:
                self._compact_pointer[job.level] = max(m.max_key for m in job.inputs)
            self._cv.notify_all()
        self.counters.compactions += 1
        self.counters.bytes_compacted += sum(m.file_size for m in job.all_inputs())
        self.counters.compaction_seconds += perf_counter() - t0
        return outputs

    def compact_all(self) -> int:
        """Run compactions until no level is over its limit."""
        n = 0
        while (job := self.pick_compaction()) is not None:
            self.compact(job)
            n += 1
        return n

    def _compaction_loop(self) -> None:
        while not self._stop.is_set():
            job = self.pick_compaction()
            if job is None:
                with self._cv:
                    self._cv.wait(0.05)
                continue
            try:
                self.compact(job)
            except StoreError:
                log.exception("compaction failed; previous version kept")
                self._stop.wait(0.5)

    # -- maintenance ---------------------------------------------------

    def _after_op(self) -> None:
        if self._inline and (self._dirty or self.learner.busy or self.learner.due(self.clock.now())):
            self.maintain()

    def maintain(self, learn: bool = True) -> None:
        """Inline mode: run pending compactions and learning on this thread."""
        if self._in_maintain or self.options.background:
            return
        learner = self.learner
        if self._dirty and self.pick_compaction() is None:
            self._dirty = False
        if not self._dirty and (not learn or not learner.due(self.clock.now())) and not learner.busy:
            return
        self._in_maintain = True
        t0 = perf_counter()
        try:
            self.compact_all()
            self._dirty = False
            if learn:
                learner.poll()
                learner.run_pending()
        finally:
            self._in_maintain = False
            self.counters.maintenance_seconds += perf_counter() - t0

    def fire_timers(self) -> int:
        """Fire every pending wait timer now, regardless of its due time."""
        return self.learner.poll(float("inf"))

    def wait_idle(self, timeout: float = 30.0) -> bool:
        """Wait until no compaction or due learning work is outstanding."""
        deadline = perf_counter() + timeout
        while True:
            if not self.options.background:
                self.maintain()
            due = self.learner.next_due()
            busy = (
                self.pick_compaction() is not None
                or self.learner.busy
                or (due is not None and due <= self.clock.now())
            )
            if not busy or perf_counter() > deadline:
                return not busy
            time.sleep(0.005)

    def learn_all(self) -> int:
        """Learn every live unlearned file now (and every level in level mode)."""
        n = 0
        for meta in list(self._version.files()):
            if self.options.learning_mode == LEVEL and meta.level > 0:
                continue
            if meta.model is None and self.learner.learn_file(meta):
                n += 1
        if self.options.learning_mode == LEVEL:
            for level in range(1, NUM_LEVELS):
                if self._version.levels[level] and self.learner.learn_level(level) is not None:
                    n += 1
        return n

    # -- learner host interface ----------------------------------------

    def live_meta(self, file_id: int) -> Optional[SSTableMeta]:
        return self._live.get(file_id)

    def table_for(self, meta: SSTableMeta) -> Table:
        return meta.table

    def attach_model(self, meta: SSTableMeta, model: PLRModel) -> bool:
        with self._lock:
            if self._live.get(meta.file_id) is not meta or meta.model is not None:
                return False
            if self.options.persist_models:
                p = model_path(self.path, meta.file_id)
                with open(p + ".tmp", "wb") as fh:
                    fh.write(serialize_model(model))
                os.replace(p + ".tmp", p)
            meta.model = model
            return True

    def level_snapshot(self, level: int) -> tuple[int, tuple[SSTableMeta, ...]]:
        v = self._version
        return v.epochs[level], v.levels[level]

    def install_level_model(self, level: int, model: LevelModel) -> bool:
        with self._lock:
            if self._version.epochs[level] != model.epoch:
                return False
            self._level_models[level] = model
            self._publish()
            return True

    def level_model(self, level: int) -> Optional[LevelModel]:
        return self._level_models[level]

    # -- reads ---------------------------------------------------------

    def find_files(self, key: bytes, version: Optional[Version] = None) -> list[SSTableMeta]:
        return (version or self._version).find_files(key)

    def get(self, key: bytes) -> Optional[bytes]:
        """Value for ``key`` or None when absent or deleted."""
        return self._get(key, [])

    def get_traced(self, key: bytes) -> tuple[Optional[bytes], list[InternalLookupRecord]]:
        """Like ``get`` but also returns the internal lookup records, in probe order."""
        records: list[InternalLookupRecord] = []
        value = self._get(key, records)
        return value, records

    def _get(self, key: bytes, records: list[InternalLookupRecord]) -> Optional[bytes]:
        t0 = perf_counter()
        if type(key) is not bytes:
            key = bytes(key) if isinstance(key, bytearray) else key
        if len(key) != self.key_size or type(key) is not bytes:
            raise InvalidInputError(f"key must be exactly {self.key_size} bytes")
        mem, imm, version, level_models = self._state
        hit = mem.get(key)
        if hit is None and imm is not None:
            hit = imm.get(key)
        t1 = perf_counter()
        steps = {MEMTABLE: t1 - t0}
        ptr = None
        if hit is not None:
            ptr = hit[0]
        elif self._level_mode and self.use_models and any(level_models):
            ptr = self._probe_levels(key, version, level_models, records, steps)
        else:
            candidates = version.find_files(key)
            steps[FIND_FILES] = perf_counter() - t1
            use_models = self.use_models
            for meta in candidates:
                if use_models and meta.model is not None:
                    found, rec = lookup_in_file_model(meta, key)
                else:
                    found, rec = lookup_in_file_baseline(meta, key)
                records.append(rec)
                if found is not None:
                    ptr = found
                    break
        t2 = perf_counter()
        value = None
        if ptr is not None and not pointer_is_tombstone(ptr):
            value = self._read_value(key, ptr)
        t3 = perf_counter()
        steps[READ_VALUE] = t3 - t2
        self._bookkeep(records, steps, value is not None)
        if self._inline:
            # Maintenance work is accounted on its own, not as part of the get.
            m0 = self.counters.maintenance_seconds
            self._after_op()
            t3 += self.counters.maintenance_seconds - m0
        self.metrics.step_seconds[BOOKKEEPING] += perf_counter() - t3
        return value

    def _probe_levels(self, key, version, level_models, records, steps) -> Optional[bytes]:
        find = 0.0
        t = perf_counter()
        l0 = [m for m in version.levels[0] if m.min_key <= key <= m.max_key]
        find += perf_counter() - t
        for meta in l0:
            if meta.model is not None:
                found, rec = lookup_in_file_model(meta, key)
            else:
                found, rec = lookup_in_file_baseline(meta, key)
            records.append(rec)
            if found is not None:
                steps[FIND_FILES] = find
                return found
        for level in range(1, NUM_LEVELS):
            lm = level_models[level]
            if lm is not None:
                found, rec = lookup_in_level_model(lm, key)
            else:
                t = perf_counter()
                meta = version.file_in_level(level, key)
                find += perf_counter() - t
                if meta is None:
                    continue
                found, rec = lookup_in_file_baseline(meta, key)
            if rec is not None:
                records.append(rec)
            if found is not None:
                steps[FIND_FILES] = find
                return found
        steps[FIND_FILES] = find
        return None

    def _read_value(self, key: bytes, raw_ptr: bytes) -> bytes:
        fid, offset, length = unpack_pointer(raw_ptr)
        vlog = self._vlogs.get(fid)
        if vlog is None:
            raise CorruptionError(f"pointer references missing value log {fid}")
        stored_key, value = vlog.read_at(offset, length)
        if stored_key != key:
            raise CorruptionError("value log record belongs to a different key")
        return value

    def _bookkeep(self, records: list[InternalLookupRecord], steps: dict[str, float], found: bool) -> None:
        m = self.metrics
        m.gets += 1
        if found:
            m.found += 1
        ss = m.step_seconds
        for name, d in steps.items():
            ss[name] += d
        if records:
            internal = m.internal
            for rec in records:
                pk = (rec.path, rec.positive)
                internal[pk] = internal.get(pk, 0) + 1
                for name, d in rec.steps.items():
                    ss[name] += d
            self.cba.record_lookups(records)

    # -- scans ---------------------------------------------------------

    def scan(self, start_key: bytes, limit: int) -> list[tuple[bytes, bytes]]:
        """Up to ``limit`` live ``(key, value)`` pairs with key >= start_key, ascending."""
        self._check_key(start_key)
        if limit < 0:
            raise InvalidInputError("limit must be >= 0")
        self.counters.scans += 1
        if limit == 0:
            return []
        start_key = bytes(start_key)
        mem, imm, version, _ = self._state
        sources = [_tag(mem.items_from(start_key), 0)]
        if imm is not None:
            sources.append(_tag(imm.items_from(start_key), 1))
        for m in version.levels[0]:
            if m.max_key >= start_key:
                sources.append(_tag(m.table.iter_from(self._seek(m, start_key)), len(sources)))
        for level in range(1, NUM_LEVELS):
            files = version.levels[level]
            if not files:
                continue
            i = bisect_left([m.max_key for m in files], start_key)
            if i < len(files):
                sources.append(_tag(self._level_iter(files, i, start_key), len(sources)))
        out = []
        last = None
        for key, _, ptr in heapq.merge(*sources):
            if key == last:
                continue
            last = key
            if pointer_is_tombstone(ptr):
                continue
            out.append((key, self._read_value(key, ptr)))
            if len(out) >= limit:
                break
        self._after_op()
        return out

    def _level_iter(self, files, i: int, start_key: bytes) -> Iterator[tuple[bytes, bytes]]:
        yield from files[i].table.iter_from(self._seek(files[i], start_key))
        for m in files[i + 1 :]:
            yield from m.table

    def _seek(self, meta: SSTableMeta, key: bytes) -> int:
        """First record index >= key, narrowed by the model when one is attached."""
        table = meta.table
        model = meta.model
        if key <= meta.min_key:
            return 0
        if model is None or not self.use_models:
            return table.lower_bound(key)
        k = int.from_bytes(key, "big")
        n = table.record_count
        pos = model.position(k)
        lo = max(0, pos - model.delta)
        hi = min(n, pos + model.delta + 1)
        a, z = lo, hi
        while a < z:
            mid = (a + z) >> 1
            if table.key_at(mid) < key:
                a = mid + 1
            else:
                z = mid
        # Absent keys carry no error guarantee; confirm the window brackets the answer.
        if (a > 0 and table.key_at(a - 1) >= key) or (a < n and a == hi and table.key_at(a) < key):
            return table.lower_bound(key)
        return a

    # -- introspection -------------------------------------------------

    def learned_files(self) -> list[SSTableMeta]:
        return [m for m in self._version.files() if m.model is not None]

    def iter_all(self) -> Iterator[tuple[bytes, bytes]]:
        start = bytes(self.key_size)
        batch = self.scan(start, 1 << 62)
        yield from batch

    def stats_rows(self) -> list[tuple]:
        return self.cba.dump_rows()


def _tag(it, prec: int):
    for k, p in it:
        yield k, prec, p


def _tagged(table: Table, prec: int):
    return _tag(iter(table), prec)


def _tagged_chain(metas: list[SSTableMeta], prec: int):
    def gen():
        for m in metas:
            yield from m.table

    return _tag(gen(), prec)


def open_store(path: str, options: Optional[Options] = None, **kwargs) -> Store:
    return Store(path, options, **kwargs)

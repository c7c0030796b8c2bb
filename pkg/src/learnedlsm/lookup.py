"""Per-file lookup paths and the record each probe leaves behind.

The baseline path searches the index block, queries the filter, loads the
data block and binary-searches it. The model path predicts a position,
queries the filter, loads only the ``pos +/- delta`` records and locates the
key in that chunk. Both return the encoded value pointer or ``None``, and
both time every step under a fixed step name.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from time import perf_counter
from typing import Optional

from .plr import PLRModel
from .sstable import POINTER_SIZE, SSTableMeta

LOAD_IB_FB = "LoadIB+FB"
SEARCH_IB = "SearchIB"
SEARCH_FB = "SearchFB"
LOAD_DB = "LoadDB"
SEARCH_DB = "SearchDB"
MODEL_LOOKUP = "ModelLookup"
LOAD_CHUNK = "LoadChunk"
LOCATE_KEY = "LocateKey"

FIND_FILES = "FindFiles"
MEMTABLE = "MemTable"
READ_VALUE = "ReadValue"
BOOKKEEPING = "Bookkeeping"

BASELINE_STEPS = (LOAD_IB_FB, SEARCH_IB, SEARCH_FB, LOAD_DB, SEARCH_DB)
MODEL_STEPS = (MODEL_LOOKUP, SEARCH_FB, LOAD_CHUNK, LOCATE_KEY)

BASELINE = "baseline"
MODEL = "model"


@dataclass(slots=True)
class InternalLookupRecord:
    """One probe of one candidate file during a get."""

    file_id: int
    level: int
    positive: bool
    path: str
    steps: dict[str, float] = field(default_factory=dict)
    probes: int = 0

    @property
    def outcome(self) -> str:
        return "positive" if self.positive else "negative"

    @property
    def duration(self) -> float:
        return sum(self.steps.values())


def lookup_in_file_baseline(meta: SSTableMeta, key: bytes) -> tuple[Optional[bytes], InternalLookupRecord]:
    t0 = perf_counter()
    table = meta.table
    steps: dict[str, float] = {}
    rec = InternalLookupRecord(meta.file_id, meta.level, False, BASELINE, steps)
    # Fully cached: loading the index and filter blocks is taking the references.
    index = table.index_block
    filt = table.filter
    t1 = perf_counter()
    steps[LOAD_IB_FB] = t1 - t0
    es = table.entry_size
    ks = table.key_size
    lo, hi = 0, table.num_blocks
    while lo < hi:
        mid = (lo + hi) >> 1
        b = mid * es
        if index[b : b + ks] < key:
            lo = mid + 1
        else:
            hi = mid
    t2 = perf_counter()
    steps[SEARCH_IB] = t2 - t1
    if lo >= table.num_blocks:
        return None, rec
    present = filt.may_contain(key)
    t3 = perf_counter()
    steps[SEARCH_FB] = t3 - t2
    if not present:
        return None, rec
    block = table.load_block(lo)
    t4 = perf_counter()
    steps[LOAD_DB] = t4 - t3
    rs = table.record_size
    a, z = 0, len(block) // rs
    probes = 0
    while a < z:
        mid = (a + z) >> 1
        probes += 1
        b = mid * rs
        if block[b : b + ks] < key:
            a = mid + 1
        else:
            z = mid
    found = None
    b = a * rs
    if a * rs < len(block) and block[b : b + ks] == key:
        found = block[b + ks : b + ks + POINTER_SIZE]
        rec.positive = True
    steps[SEARCH_DB] = perf_counter() - t4
    rec.probes = probes
    return found, rec


def lookup_in_file_model(
    meta: SSTableMeta, key: bytes, model: Optional[PLRModel] = None
) -> tuple[Optional[bytes], InternalLookupRecord]:
    """Model path; ``model`` defaults to the one attached to ``meta``."""
    t0 = perf_counter()
    if model is None:
        model = meta.model
    table = meta.table
    steps: dict[str, float] = {}
    rec = InternalLookupRecord(meta.file_id, meta.level, False, MODEL, steps)
    k = int.from_bytes(key, "big")
    if k < model.min_key or k > model.max_key:
        steps[MODEL_LOOKUP] = perf_counter() - t0
        return None, rec
    n = model.num_points
    starts = model._starts
    i = bisect_right(starts, k) - 1
    if i < 0:
        i = 0
    pos = int(model._slopes[i] * float(k - starts[i]) + model._intercepts[i] + 0.5)
    if pos < 0:
        pos = 0
    elif pos >= n:
        pos = n - 1
    d = model.delta
    lo = pos - d if pos > d else 0
    hi = pos + d
    if hi >= n:
        hi = n - 1
    t1 = perf_counter()
    steps[MODEL_LOOKUP] = t1 - t0
    present = table.filter.may_contain(key)
    t2 = perf_counter()
    steps[SEARCH_FB] = t2 - t1
    if not present:
        return None, rec
    rs = table.record_size
    pb = table.per_block
    if lo // pb == hi // pb:
        chunk = table.buf[lo * rs : (hi + 1) * rs]
    else:
        chunk = table.load_range(lo, hi)
    t3 = perf_counter()
    steps[LOAD_CHUNK] = t3 - t2
    ks = table.key_size
    b = (pos - lo) * rs
    if chunk[b : b + ks] == key:
        # Exact prediction: no search needed.
        found = chunk[b + ks : b + rs]
        probes = 0
    else:
        found, probes = _locate(chunk, key, -1, rs, ks)
    steps[LOCATE_KEY] = perf_counter() - t3
    rec.probes = probes
    if found is not None:
        rec.positive = True
    return found, rec


def _locate(chunk: bytes, key: bytes, guess: int, rs: int, ks: int) -> tuple[Optional[bytes], int]:
    """Check the predicted slot (unless ``guess`` < 0), then binary-search the chunk."""
    if guess >= 0:
        b = guess * rs
        if chunk[b : b + ks] == key:
            return chunk[b + ks : b + rs], 0
    lo, hi = 0, len(chunk) // rs
    probes = 0
    while lo < hi:
        mid = (lo + hi) >> 1
        probes += 1
        b = mid * rs
        if chunk[b : b + ks] < key:
            lo = mid + 1
        else:
            hi = mid
    b = lo * rs
    if b < len(chunk) and chunk[b : b + ks] == key:
        return chunk[b + ks : b + rs], probes
    return None, probes


def lookup_in_level_model(lm, key: bytes) -> tuple[Optional[bytes], Optional[InternalLookupRecord]]:
    """Probe a sorted level through its level model.

    The predicted global window picks the file; a key outside every file in
    the window cannot be in the level. Returns ``(None, None)`` when no file
    is probed at all.
    """
    t0 = perf_counter()
    plr = lm.plr
    k = int.from_bytes(key, "big")
    if k < plr.min_key or k > plr.max_key:
        return None, None
    pos = plr.position(k)
    d = plr.delta
    lo = pos - d if pos > d else 0
    hi = pos + d
    if hi >= plr.num_points:
        hi = plr.num_points - 1
    first, _ = lm.locate(lo)
    last, _ = lm.locate(hi)
    files = lm.files
    idx = -1
    for i in range(first, last + 1):
        m = files[i]
        if m.min_key <= key <= m.max_key:
            idx = i
            break
    if idx < 0:
        return None, None
    meta = files[idx]
    start = lm.file_start(idx)
    llo = lo - start if lo > start else 0
    lhi = hi - start
    if lhi >= meta.record_count:
        lhi = meta.record_count - 1
    t1 = perf_counter()
    steps: dict[str, float] = {MODEL_LOOKUP: t1 - t0}
    rec = InternalLookupRecord(meta.file_id, meta.level, False, MODEL, steps)
    table = meta.table
    present = table.filter.may_contain(key)
    t2 = perf_counter()
    steps[SEARCH_FB] = t2 - t1
    if not present:
        return None, rec
    chunk = table.load_range(llo, lhi)
    t3 = perf_counter()
    steps[LOAD_CHUNK] = t3 - t2
    guess = min(max(pos - start - llo, 0), lhi - llo)
    found, probes = _locate(chunk, key, guess, table.record_size, table.key_size)
    steps[LOCATE_KEY] = perf_counter() - t3
    rec.probes = probes
    rec.positive = found is not None
    return found, rec

"""Lookup/lifetime statistics and the learn-or-skip decision.

The benefit of learning a file is the lookup time a model would save over
the rest of the file's life::

    B = max(0, T_nb - T_nm) * N_n + max(0, T_pb - T_pm) * N_p

where ``T_*b`` and ``T_*m`` are baseline- and model-path means taken from
the same population of lookups at the file's level, and ``N_*``
are the mean lookup counts of completed files at the level, scaled by the
file's size relative to the level mean. The cost is the training time,
estimated as a calibrated per-point cost times the record count.
"""

from __future__ import annotations

import enum
import functools
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .lookup import MODEL, InternalLookupRecord
from .plr import fit_keys
from .version import NUM_LEVELS

DEFAULT_S_MIN = 10
# An aggregate supplies path means only with this many samples in each bucket.
MIN_SAMPLES = 32
# Samples above this multiple of the store-wide bucket mean are clipped to it,
# so scheduler or collector pauses do not masquerade as slow lookups.
OUTLIER_FACTOR = 5.0
OUTLIER_WARMUP = 100
STATS_COLUMNS = ("level", "file_id", "lifetime_ms", "n_pos", "n_neg", "t_pb_us", "t_nb_us", "t_pm_us", "t_nm_us", "records")


class Verdict(enum.Enum):
    LEARN = "Learn"
    SKIP = "Skip"
    BOOTSTRAP = "BootstrapLearn"


@dataclass(frozen=True)
class CbaDecision:
    verdict: Verdict
    c_model: float
    b_model: float

    @property
    def priority(self) -> float:
        return self.b_model - self.c_model

    @property
    def learn(self) -> bool:
        return self.verdict is not Verdict.SKIP


class _Timing:
    """Running sum/count per (path, outcome) bucket: pb, nb, pm, nm."""

    __slots__ = ("sums", "counts")

    def __init__(self) -> None:
        self.sums = [0.0, 0.0, 0.0, 0.0]
        self.counts = [0, 0, 0, 0]

    def add(self, bucket: int, duration: float) -> None:
        self.sums[bucket] += duration
        self.counts[bucket] += 1

    def merge(self, other: "_Timing") -> None:
        for i in range(4):
            self.sums[i] += other.sums[i]
            self.counts[i] += other.counts[i]

    def mean(self, bucket: int) -> Optional[float]:
        c = self.counts[bucket]
        return self.sums[bucket] / c if c else None


PB, NB, PM, NM = range(4)


def _bucket(rec: InternalLookupRecord) -> int:
    if rec.path == MODEL:
        return PM if rec.positive else NM
    return PB if rec.positive else NB


@dataclass
class FileStats:
    file_id: int
    level: int
    records: int
    created_at: float
    deleted_at: Optional[float] = None
    n_pos: int = 0
    n_neg: int = 0
    timing: _Timing = field(default_factory=_Timing, repr=False)

    @property
    def lifetime(self) -> Optional[float]:
        if self.deleted_at is None:
            return None
        return self.deleted_at - self.created_at

    def mean(self, bucket: int) -> Optional[float]:
        return self.timing.mean(bucket)


@dataclass
class LevelStats:
    level: int
    completed: int = 0
    sum_n_pos: int = 0
    sum_n_neg: int = 0
    sum_records: int = 0
    sum_lifetime: float = 0.0
    timing: _Timing = field(default_factory=_Timing, repr=False)
    # Every lookup seen at this level, live files included.
    observed: _Timing = field(default_factory=_Timing, repr=False)

    def _avg(self, total: float) -> Optional[float]:
        return total / self.completed if self.completed else None

    @property
    def mean_n_pos(self) -> Optional[float]:
        return self._avg(self.sum_n_pos)

    @property
    def mean_n_neg(self) -> Optional[float]:
        return self._avg(self.sum_n_neg)

    @property
    def mean_records(self) -> Optional[float]:
        return self._avg(self.sum_records)

    @property
    def mean_lifetime(self) -> Optional[float]:
        return self._avg(self.sum_lifetime)

    def fold(self, fs: FileStats) -> None:
        self.completed += 1
        self.sum_n_pos += fs.n_pos
        self.sum_n_neg += fs.n_neg
        self.sum_records += fs.records
        self.sum_lifetime += fs.lifetime or 0.0
        self.timing.merge(fs.timing)


@functools.lru_cache(maxsize=4)
def calibrate_cost_per_point(n: int = 1_000_000, delta: int = 8, seed: int = 0) -> float:
    """Seconds of training per point, measured once per process on synthetic keys."""
    rng = random.Random(seed)
    keys = sorted({int((rng.gauss(0.0, 1.0) + 10.0) * (1 << 59)) for _ in range(n)})
    t0 = time.perf_counter()
    fit_keys(keys, delta)
    return (time.perf_counter() - t0) / len(keys)


class CostBenefitAnalyzer:
    def __init__(
        self,
        cost_per_point: float,
        short_lived: float,
        s_min: int = DEFAULT_S_MIN,
        use_observed_counts: bool = True,
    ):
        self.cost_per_point = cost_per_point
        self.short_lived = short_lived
        self.s_min = s_min
        self.use_observed_counts = use_observed_counts
        self.files: dict[int, FileStats] = {}
        self.levels = [LevelStats(i) for i in range(NUM_LEVELS)]
        self.completed: list[FileStats] = []
        # Every deleted file, short-lived ones included, for lifetime reports.
        self.history: list[FileStats] = []
        self.store_observed = _Timing()
        self.dropped = 0
        self.clipped = 0
        self.discarded_short_lived = 0
        self._lock = threading.Lock()

    # -- events --------------------------------------------------------

    def on_file_created(self, file_id: int, level: int, records: int, now: float) -> None:
        with self._lock:
            self.files[file_id] = FileStats(file_id, level, records, now)

    def record_internal_lookup(self, rec: InternalLookupRecord) -> None:
        self.record_lookups((rec,))

    def record_lookups(self, recs: Iterable[InternalLookupRecord]) -> None:
        with self._lock:
            files = self.files
            levels = self.levels
            for rec in recs:
                fs = files.get(rec.file_id)
                if fs is None:
                    self.dropped += 1
                    continue
                if rec.positive:
                    fs.n_pos += 1
                else:
                    fs.n_neg += 1
                bucket = _bucket(rec)
                d = sum(rec.steps.values())
                so = self.store_observed
                if so.counts[bucket] >= OUTLIER_WARMUP:
                    cap = OUTLIER_FACTOR * so.sums[bucket] / so.counts[bucket]
                    if d > cap:
                        d = cap
                        self.clipped += 1
                fs.timing.add(bucket, d)
                levels[fs.level].observed.add(bucket, d)
                self.store_observed.add(bucket, d)

    def on_file_deleted(self, file_id: int, now: float) -> Optional[FileStats]:
        with self._lock:
            fs = self.files.pop(file_id, None)
            if fs is None:
                return None
            fs.deleted_at = now
            self.history.append(fs)
            if fs.lifetime < self.short_lived:
                self.discarded_short_lived += 1
                return fs
            self.levels[fs.level].fold(fs)
            self.completed.append(fs)
            return fs

    # -- estimates -----------------------------------------------------

    def estimate_cost(self, records: int) -> float:
        return self.cost_per_point * records

    def _path_means(self, fs: FileStats, b_bucket: int, m_bucket: int) -> tuple[Optional[float], Optional[float]]:
        """Baseline and model means for one outcome, taken from one aggregate.

        Both means come from the same population of lookups so that effects
        common to both paths (cold new files, machine load) cancel. The file's
        own baseline timing is only a fallback when no aggregate has both.
        """
        lv = self.levels[fs.level]
        aggregates = (lv.timing, lv.observed, self.store_observed)
        for t in aggregates:
            if t.counts[b_bucket] >= MIN_SAMPLES and t.counts[m_bucket] >= MIN_SAMPLES:
                return t.mean(b_bucket), t.mean(m_bucket)
        tb = fs.timing.mean(b_bucket)
        tm = None
        for t in aggregates:
            if tb is None:
                tb = t.mean(b_bucket)
            if tm is None:
                tm = t.mean(m_bucket)
        return tb, tm

    def estimate_benefit(self, file_id: int) -> Optional[float]:
        """B_model for a live file, or None when statistics are insufficient."""
        with self._lock:
            return self._benefit(self.files.get(file_id))

    def _benefit(self, fs: Optional[FileStats]) -> Optional[float]:
        if fs is None:
            return None
        lv = self.levels[fs.level]
        if lv.completed < self.s_min or not lv.sum_records:
            return None
        f = fs.records / lv.mean_records
        n_neg = lv.mean_n_neg * f
        n_pos = lv.mean_n_pos * f
        if self.use_observed_counts:
            n_neg = max(n_neg, fs.n_neg)
            n_pos = max(n_pos, fs.n_pos)
        total = 0.0
        for n, b_bucket, m_bucket in ((n_neg, NB, NM), (n_pos, PB, PM)):
            if n <= 0:
                continue
            tb, tm = self._path_means(fs, b_bucket, m_bucket)
            if tb is None or tm is None:
                return None
            total += max(0.0, tb - tm) * n
        return total

    def should_learn(self, file_id: int) -> CbaDecision:
        with self._lock:
            fs = self.files.get(file_id)
            if fs is None:
                return CbaDecision(Verdict.SKIP, 0.0, 0.0)
            c = self.estimate_cost(fs.records)
            b = self._benefit(fs)
        return decide(b, c)

    # -- reporting -----------------------------------------------------

    def live(self) -> list[FileStats]:
        with self._lock:
            return list(self.files.values())

    def dump_rows(self) -> list[tuple]:
        """Rows in ``STATS_COLUMNS`` order: completed files, then one aggregate per level."""
        with self._lock:
            rows = [_row(fs.level, fs.file_id, fs.lifetime, fs.n_pos, fs.n_neg, fs.timing, fs.records) for fs in self.completed]
            for lv in self.levels:
                if lv.completed:
                    rows.append(
                        _row(lv.level, "*", lv.mean_lifetime, lv.mean_n_pos, lv.mean_n_neg, lv.timing, lv.mean_records)
                    )
            return rows

    def dump(self) -> str:
        return format_stats(self.dump_rows())


def model_benefit(t_nb: float, t_nm: float, n_neg: float, t_pb: float, t_pm: float, n_pos: float) -> float:
    """Lookup time saved by a model, each term floored at zero."""
    return max(0.0, t_nb - t_nm) * n_neg + max(0.0, t_pb - t_pm) * n_pos


def decide(b_model: Optional[float], c_model: float) -> CbaDecision:
    """Learn iff benefit exceeds cost; missing statistics mean bootstrap."""
    if b_model is None:
        return CbaDecision(Verdict.BOOTSTRAP, c_model, max(c_model, 0.0))
    if b_model > c_model:
        return CbaDecision(Verdict.LEARN, c_model, b_model)
    return CbaDecision(Verdict.SKIP, c_model, b_model)


def _us(v: Optional[float]) -> str:
    return "" if v is None else f"{v * 1e6:.3f}"


def _num(v) -> str:
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


def _row(level, file_id, lifetime, n_pos, n_neg, timing: _Timing, records) -> tuple:
    return (
        level,
        file_id,
        "" if lifetime is None else f"{lifetime * 1e3:.3f}",
        _num(n_pos),
        _num(n_neg),
        _us(timing.mean(PB)),
        _us(timing.mean(NB)),
        _us(timing.mean(PM)),
        _us(timing.mean(NM)),
        _num(records),
    )


def format_stats(rows: Iterable[tuple]) -> str:
    lines = ["\t".join(STATS_COLUMNS)]
    lines.extend("\t".join(str(c) for c in row) for row in rows)
    return "\n".join(lines) + "\n"

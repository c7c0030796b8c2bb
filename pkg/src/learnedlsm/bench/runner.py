"""Drive a store with a workload and summarise what happened."""

from __future__ import annotations

import hashlib
import statistics
from dataclasses import dataclass, field
from itertools import islice
from time import perf_counter
from typing import Iterable, Optional, Sequence

from ..engine import Store
from ..keys import encode_key
from .workloads import DELETE, GET, PUT, SCAN, WorkloadSpec, gen_workload, value_for


@dataclass
class BenchReport:
    ops: int = 0
    gets: int = 0
    puts: int = 0
    deletes: int = 0
    scans: int = 0
    found: int = 0
    foreground_seconds: float = 0.0
    learning_seconds: float = 0.0
    compaction_seconds: float = 0.0
    throughput: float = 0.0
    get_mean_us: float = 0.0
    get_p50_us: float = 0.0
    get_p99_us: float = 0.0
    op_mean_us: float = 0.0
    step_means_us: dict[str, float] = field(default_factory=dict)
    path_counts: dict[str, int] = field(default_factory=dict)
    files_learned: int = 0
    levels_learned: int = 0
    decisions: dict[str, int] = field(default_factory=dict)
    checksum: str = ""
    aborted: bool = False
    error: str = ""
    stats_dump: str = field(default="", repr=False)

    @property
    def total_seconds(self) -> float:
        return self.foreground_seconds + self.learning_seconds + self.compaction_seconds

    @property
    def internal_lookups(self) -> int:
        return sum(self.path_counts.values())

    def step_sum_us(self) -> float:
        return sum(self.step_means_us.values())

    def lines(self) -> list[str]:
        """Machine-readable ``key=value`` lines."""
        out = [
            f"ops={self.ops}",
            f"gets={self.gets}",
            f"puts={self.puts}",
            f"deletes={self.deletes}",
            f"scans={self.scans}",
            f"found={self.found}",
            f"throughput_ops_s={self.throughput:.1f}",
            f"get_mean_us={self.get_mean_us:.3f}",
            f"get_p50_us={self.get_p50_us:.3f}",
            f"get_p99_us={self.get_p99_us:.3f}",
            f"foreground_s={self.foreground_seconds:.4f}",
            f"learning_s={self.learning_seconds:.4f}",
            f"compaction_s={self.compaction_seconds:.4f}",
            f"total_s={self.total_seconds:.4f}",
            f"files_learned={self.files_learned}",
            f"levels_learned={self.levels_learned}",
            f"checksum={self.checksum}",
            f"aborted={int(self.aborted)}",
        ]
        out += [f"step.{k}_us={v:.3f}" for k, v in self.step_means_us.items()]
        out += [f"path.{k}={v}" for k, v in sorted(self.path_counts.items())]
        out += [f"decision.{k}={v}" for k, v in sorted(self.decisions.items())]
        if self.error:
            out.append(f"error={self.error}")
        return out

    def table(self) -> str:
        """Human-readable summary."""
        rows = [
            ("operations", f"{self.ops} ({self.gets} get / {self.puts} put / {self.deletes} delete / {self.scans} scan)"),
            ("throughput", f"{self.throughput:,.0f} ops/s"),
            ("get latency", f"mean {self.get_mean_us:.2f} us, p50 {self.get_p50_us:.2f} us, p99 {self.get_p99_us:.2f} us"),
            ("time", f"foreground {self.foreground_seconds:.3f} s, learning {self.learning_seconds:.3f} s, compaction {self.compaction_seconds:.3f} s"),
            ("learned", f"{self.files_learned} files, {self.levels_learned} levels"),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {val}" for name, val in rows]
        if self.step_means_us:
            lines.append("per-get step means (us):")
            lines += [f"  {k:<12} {v:9.3f}" for k, v in self.step_means_us.items()]
        if self.path_counts:
            lines.append("internal lookups:")
            lines += [f"  {k:<18} {v}" for k, v in sorted(self.path_counts.items())]
        return "\n".join(lines)


LOAD_BATCH = 4096


def load_keys(store: Store, keys: Iterable[int], value_size: int = 64) -> int:
    """Insert ``keys`` in the given order with version-0 values."""
    ks = store.key_size
    it = iter(keys)
    n = 0
    while True:
        # Batches keep inline maintenance interleaved with the load.
        got = store.put_many((encode_key(k, ks), value_for(k, 0, value_size)) for k in islice(it, LOAD_BATCH))
        if not got:
            return n
        n += got


def _percentile(sorted_vals: Sequence[float], q: float) -> float:
    if not sorted_vals:
        return 0.0
    i = min(len(sorted_vals) - 1, int(q * len(sorted_vals)))
    return sorted_vals[i]


def run_workload(
    store: Store,
    spec: WorkloadSpec,
    keyspace: Sequence[int],
    ops: Optional[Iterable[tuple[str, int]]] = None,
    results: Optional[list] = None,
) -> BenchReport:
    """Execute ``spec`` (or an explicit op stream) on one thread and report.

    When ``results`` is given, every get/scan result is appended to it.
    """
    report = BenchReport()
    stream = ops if ops is not None else gen_workload(spec, keyspace)
    ks = store.key_size
    versions: dict[int, int] = {}
    digest = hashlib.blake2b(digest_size=16)
    get_lat: list[float] = []
    metrics = store.metrics
    metrics.reset()
    counters = store.counters
    learner = store.learner
    learn0 = learner.learn_seconds
    comp0 = counters.compaction_seconds
    files0 = learner.files_learned
    levels0 = learner.levels_learned
    dec0 = {v.value: n for v, n in learner.decisions.items()}
    fg = 0.0
    try:
        for kind, k in stream:
            key = encode_key(k, ks)
            m0 = counters.maintenance_seconds
            t0 = perf_counter()
            if kind == GET:
                v = store.get(key)
                t1 = perf_counter()
                report.gets += 1
                digest.update(b"\x01" + v if v is not None else b"\x00")
                if results is not None:
                    results.append(v)
                lat = (t1 - t0) - (counters.maintenance_seconds - m0)
                get_lat.append(lat)
            elif kind == PUT:
                ver = versions.get(k, 0) + 1
                versions[k] = ver
                store.put(key, value_for(k, ver, spec.value_size))
                t1 = perf_counter()
                report.puts += 1
                lat = (t1 - t0) - (counters.maintenance_seconds - m0)
            elif kind == DELETE:
                store.delete(key)
                t1 = perf_counter()
                report.deletes += 1
                lat = (t1 - t0) - (counters.maintenance_seconds - m0)
            elif kind == SCAN:
                got = store.scan(key, spec.scan_length)
                t1 = perf_counter()
                report.scans += 1
                for rk, rv in got:
                    digest.update(rk + rv)
                if results is not None:
                    results.append(got)
                lat = (t1 - t0) - (counters.maintenance_seconds - m0)
            else:
                raise ValueError(f"unknown op {kind!r}")
            fg += lat
            report.ops += 1
    except Exception as exc:  # partial report, flagged
        report.aborted = True
        report.error = f"{type(exc).__name__}: {exc}"
    report.foreground_seconds = fg
    report.learning_seconds = learner.learn_seconds - learn0
    report.compaction_seconds = counters.compaction_seconds - comp0
    report.throughput = report.ops / fg if fg > 0 else 0.0
    if get_lat:
        s = sorted(get_lat)
        report.get_mean_us = statistics.fmean(s) * 1e6
        report.get_p50_us = _percentile(s, 0.5) * 1e6
        report.get_p99_us = _percentile(s, 0.99) * 1e6
    report.op_mean_us = fg / report.ops * 1e6 if report.ops else 0.0
    report.found = metrics.found
    if metrics.gets:
        report.step_means_us = {name: sec / metrics.gets * 1e6 for name, sec in metrics.step_seconds.items()}
    report.path_counts = {f"{path}.{'positive' if pos else 'negative'}": n for (path, pos), n in metrics.internal.items()}
    report.files_learned = learner.files_learned - files0
    report.levels_learned = learner.levels_learned - levels0
    report.decisions = {v.value: n - dec0.get(v.value, 0) for v, n in learner.decisions.items()}
    report.checksum = digest.hexdigest()
    report.stats_dump = store.cba.dump()
    return report


@dataclass
class LevelFileReport:
    level: int
    files: int
    mean_lifetime: float
    p50_lifetime: float
    p90_lifetime: float
    mean_pos: float
    mean_neg: float
    live: int


def report_file_stats(store: Store, since: float = 0.0, until: Optional[float] = None, include_live: bool = True) -> list[LevelFileReport]:
    """Per-level lifetime and internal-lookup summaries.

    Lifetimes are measured from ``since`` (files created earlier count from
    then); files still live are censored at ``until``.
    """
    cba = store.cba
    if until is None:
        until = store.clock.now()
    by_level: dict[int, list[tuple[float, int, int, bool]]] = {}
    with cba._lock:
        done = [(fs.level, fs.created_at, fs.deleted_at, fs.n_pos, fs.n_neg, False) for fs in cba.history if fs.deleted_at >= since]
        live = [(fs.level, fs.created_at, until, fs.n_pos, fs.n_neg, True) for fs in cba.files.values()] if include_live else []
    for level, created, ended, npos, nneg, is_live in done + live:
        life = max(0.0, ended - max(created, since))
        by_level.setdefault(level, []).append((life, npos, nneg, is_live))
    out = []
    for level in sorted(by_level):
        rows = by_level[level]
        lives = sorted(r[0] for r in rows)
        out.append(
            LevelFileReport(
                level,
                len(rows),
                statistics.fmean(lives),
                _percentile(lives, 0.5),
                _percentile(lives, 0.9),
                statistics.fmean(r[1] for r in rows),
                statistics.fmean(r[2] for r in rows),
                sum(1 for r in rows if r[3]),
            )
        )
    return out


def format_file_stats(rows: Sequence[LevelFileReport]) -> str:
    lines = ["level\tfiles\tlive\tmean_life_s\tp50_life_s\tp90_life_s\tmean_pos\tmean_neg"]
    for r in rows:
        lines.append(
            f"L{r.level}\t{r.files}\t{r.live}\t{r.mean_lifetime:.3f}\t{r.p50_lifetime:.3f}\t{r.p90_lifetime:.3f}\t{r.mean_pos:.1f}\t{r.mean_neg:.1f}"
        )
    return "\n".join(lines) + "\n"

"""End-to-end experiments behind the acceptance suite.

Each function builds its own stores under a caller-supplied directory,
returns a plain result object and leaves the asserting to the caller.
"""

from __future__ import annotations

import gc
import os
import random
import shutil
import statistics
from bisect import bisect_left, insort
from dataclasses import dataclass, field
from time import perf_counter
from typing import Optional, Sequence

from ..clock import VirtualClock
from ..engine import Options, Store
from ..keys import encode_key
from ..learner import ALWAYS, CBA, LEVEL, OFF
from ..lookup import BASELINE, MODEL
from ..plr import fit_keys
from .competitive import competitive_ratios, gen_lifetime_traces
from .datasets import DatasetSpec, gen_dataset, load_order
from .runner import LevelFileReport, load_keys, report_file_stats
from .workloads import DELETE, GET, PUT, SCAN, WorkloadSpec, gen_workload, value_for

SYNTHETIC = ("linear", "seg1pct", "seg10pct", "normal")
DELTA_SWEEP = (2, 4, 8, 16, 32)


def build_store(path: str, keys: Sequence[int], options: Options, *, order: str = "seq", seed: int = 0, value_size: int = 64, learn: bool = True) -> Store:
    """Fresh store at ``path`` holding ``keys``, settled and (optionally) fully learned."""
    if os.path.exists(path):
        shutil.rmtree(path)
    store = Store(path, options)
    load_keys(store, load_order(list(keys), order, seed), value_size)
    store.flush_memtable()
    store.wait_idle(timeout=600)
    store.compact_all()
    if learn:
        store.learn_all()
    return store


# -- per-file model checks ---------------------------------------------------


@dataclass
class FileModelCheck:
    dataset: str
    file_id: int
    level: int
    records: int
    segments: int
    model_bytes: int
    file_bytes: int
    violations: int


def check_file_models(store: Store, dataset: str = "") -> list[FileModelCheck]:
    """Re-derive every stored key's position and test it against its file's model window."""
    out = []
    for meta in store.version.files():
        model = meta.model
        if model is None:
            out.append(FileModelCheck(dataset, meta.file_id, meta.level, meta.record_count, 0, 0, meta.file_size, -1))
            continue
        d = model.delta
        position = model.position
        bad = 0
        for i, k in enumerate(meta.table.int_keys()):
            if abs(position(k) - i) > d:
                bad += 1
        out.append(FileModelCheck(dataset, meta.file_id, meta.level, meta.record_count, len(model.segments), model.size_bytes(), meta.file_size, bad))
    return out


@dataclass
class SyntheticStores:
    """One settled, learned store per synthetic dataset."""

    root: str
    stores: dict[str, Store]
    keys: dict[str, list[int]]
    build_seconds: float

    def close(self) -> None:
        for s in self.stores.values():
            s.close()


def build_synthetic_stores(root: str, n_total: int = 1_000_000, delta: int = 8, seed: int = 0, value_size: int = 16) -> SyntheticStores:
    t0 = perf_counter()
    per = n_total // len(SYNTHETIC)
    stores, keysets = {}, {}
    for kind in SYNTHETIC:
        keys = gen_dataset(DatasetSpec(kind, per, seed))
        opts = Options(delta=delta, background=False, cba_mode="offline", cost_per_point=1e-6)
        stores[kind] = build_store(os.path.join(root, kind), keys, opts, value_size=value_size)
        keysets[kind] = keys
    return SyntheticStores(root, stores, keysets, perf_counter() - t0)


@dataclass
class DeltaSweepRow:
    dataset: str
    delta: int
    segments: int
    model_bytes: int
    table_bytes: int

    @property
    def overhead(self) -> float:
        return self.model_bytes / self.table_bytes


def delta_sweep(stores: SyntheticStores, deltas: Sequence[int] = DELTA_SWEEP) -> list[DeltaSweepRow]:
    """Retrain every live file of every dataset at each delta; totals per (dataset, delta)."""
    rows = []
    for kind, store in stores.stores.items():
        files = list(store.version.files())
        table_bytes = sum(m.file_size for m in files)
        keys = [m.table.int_keys() for m in files]
        for d in deltas:
            models = [fit_keys(k, d) for k in keys]
            rows.append(DeltaSweepRow(kind, d, sum(len(m.segments) for m in models), sum(m.size_bytes() for m in models), table_bytes))
    return rows


# -- lookup speedup ------------------------------------------------------------


@dataclass
class SpeedupResult:
    n: int
    gets: int
    model_lookup_us: float
    baseline_lookup_us: float
    model_get_us: float
    baseline_get_us: float
    model_lookups: int
    baseline_lookups: int
    files: int
    learned_files: int

    @property
    def lookup_speedup(self) -> float:
        return self.baseline_lookup_us / self.model_lookup_us

    @property
    def get_speedup(self) -> float:
        return self.baseline_get_us / self.model_get_us


def measure_lookup_paths(store: Store, keys: Sequence[int], *, batches: int = 20, batch_size: int = 2000, seed: int = 1) -> SpeedupResult:
    """Uniform read-only gets, alternating model and baseline paths batch by batch.

    Both paths see the same keys in each batch and the order flips every
    batch, so drift in machine speed hits them equally. Per-path latency is
    the mean internal-lookup duration.
    """
    rng = random.Random(seed)
    ks = store.key_size
    dur = {MODEL: 0.0, BASELINE: 0.0}
    cnt = {MODEL: 0, BASELINE: 0}
    get_t = {True: 0.0, False: 0.0}
    gets = 0
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        for b in range(batches):
            sample = [encode_key(keys[rng.randrange(len(keys))], ks) for _ in range(batch_size)]
            for use in ((True, False) if b & 1 else (False, True)):
                store.use_models = use
                t0 = perf_counter()
                for key in sample:
                    value, recs = store.get_traced(key)
                    for r in recs:
                        dur[r.path] += r.duration
                        cnt[r.path] += 1
                get_t[use] += perf_counter() - t0
                # Collect between batches, outside the timed region.
                gc.collect()
            gets += batch_size
    finally:
        store.use_models = True
        if was_enabled:
            gc.enable()
    files = list(store.version.files())
    return SpeedupResult(
        n=len(keys),
        gets=gets,
        model_lookup_us=dur[MODEL] / max(1, cnt[MODEL]) * 1e6,
        baseline_lookup_us=dur[BASELINE] / max(1, cnt[BASELINE]) * 1e6,
        model_get_us=get_t[True] / gets * 1e6,
        baseline_get_us=get_t[False] / gets * 1e6,
        model_lookups=cnt[MODEL],
        baseline_lookups=cnt[BASELINE],
        files=len(files),
        learned_files=sum(1 for m in files if m.model is not None),
    )


def lookup_speedup(root: str, n: int = 1_000_000, seed: int = 0, **kwargs) -> SpeedupResult:
    keys = gen_dataset(DatasetSpec("normal", n, seed))
    opts = Options(background=False, cba_mode="offline", cost_per_point=1e-6)
    store = build_store(os.path.join(root, "speedup"), keys, opts)
    try:
        return measure_lookup_paths(store, keys, **kwargs)
    finally:
        store.close()


# -- wait policy -----------------------------------------------------------------


@dataclass
class WaitPolicyResult:
    traces: int
    max_ratio: float
    mean_ratio: float


def wait_policy(n: int = 10_000, seed: int = 0) -> WaitPolicyResult:
    ratios = competitive_ratios(gen_lifetime_traces(n, seed))
    return WaitPolicyResult(len(ratios), max(ratios), statistics.fmean(ratios))


# -- oracle equivalence ------------------------------------------------------------


def small_store_options(**overrides) -> Options:
    """Tiny memtable and files so a few thousand keys span several levels."""
    base = dict(
        background=False,
        memtable_bytes=64 * 1024,
        max_file_bytes=64 * 1024,
        level_size_divisor=100.0,
        t_wait_ms=5.0,
        cost_per_point=2e-6,
    )
    base.update(overrides)
    return Options(**base)


class ShadowMap:
    """Sorted-map oracle mirroring the value scheme of ``run_workload``."""

    def __init__(self, key_size: int, value_size: int):
        self.ks = key_size
        self.value_size = value_size
        self.values: dict[int, bytes] = {}
        self.sorted: list[int] = []
        self.versions: dict[int, int] = {}

    def load(self, keys: Sequence[int]) -> None:
        for k in keys:
            self.values[k] = value_for(k, 0, self.value_size)
        self.sorted = sorted(self.values)

    def apply(self, kind: str, k: int, scan_length: int):
        if kind == GET:
            return self.values.get(k)
        if kind == PUT:
            ver = self.versions.get(k, 0) + 1
            self.versions[k] = ver
            if k not in self.values:
                insort(self.sorted, k)
            self.values[k] = value_for(k, ver, self.value_size)
            return None
        if kind == DELETE:
            if self.values.pop(k, None) is not None:
                del self.sorted[bisect_left(self.sorted, k)]
            return None
        i = bisect_left(self.sorted, k)
        return [(encode_key(x, self.ks), self.values[x]) for x in self.sorted[i : i + scan_length]]


@dataclass
class OracleRun:
    name: str
    ops: int
    checked: int
    mismatches: int
    first_mismatch: Optional[int]
    model_lookups: int
    baseline_lookups: int
    files_learned: int
    level_models: int = 0
    error: str = ""


def _oracle_run(name: str, store: Store, shadow: ShadowMap, spec: WorkloadSpec, keyspace: Sequence[int]) -> OracleRun:
    from .runner import run_workload

    ops = list(gen_workload(spec, keyspace))
    results: list = []
    report = run_workload(store, spec, keyspace, ops=ops, results=results)
    expected = [shadow.apply(kind, k, spec.scan_length) for kind, k in ops]
    expected = [e for (kind, _), e in zip(ops, expected) if kind in (GET, SCAN)]
    bad = [i for i, (a, b) in enumerate(zip(results, expected)) if a != b]
    if len(results) != len(expected):
        bad.append(min(len(results), len(expected)))
    counts = report.path_counts
    return OracleRun(
        name,
        report.ops,
        len(expected),
        len(bad),
        bad[0] if bad else None,
        counts.get("model.positive", 0) + counts.get("model.negative", 0),
        counts.get("baseline.positive", 0) + counts.get("baseline.negative", 0),
        len(store.learned_files()),
        sum(1 for lv in range(1, 7) if store.level_model(lv) is not None),
        report.error,
    )


ORACLE_MIXES = ((0.05, "uniform"), (0.05, "zipfian"), (0.5, "uniform"), (0.5, "zipfian"))


def oracle_equivalence(root: str, *, ops_per_trace: int = 100_000, n_keys: int = 20_000, seed: int = 0, value_size: int = 16) -> list[OracleRun]:
    """Mixed traces against a shadow map, with learning on and off, plus a level-mode read phase.

    Stores hold every other key of the key universe, so gets miss as well as
    hit and writes insert as well as overwrite.
    """
    universe = list(range(0, 3 * n_keys, 3))
    loaded = universe[::2]
    runs = []
    for learning in ("on", "off"):
        for i, (wf, dist) in enumerate(ORACLE_MIXES):
            opts = small_store_options(learning_mode="file" if learning == "on" else OFF, cba_mode=ALWAYS)
            path = os.path.join(root, f"oracle-{learning}-{i}")
            store = build_store(path, loaded, opts, order="random", seed=seed, value_size=value_size, learn=learning == "on")
            shadow = ShadowMap(store.key_size, value_size)
            shadow.load(loaded)
            spec = WorkloadSpec(ops=ops_per_trace, write_fraction=wf, delete_fraction=0.02, scan_fraction=0.03, distribution=dist, seed=seed + i, value_size=value_size)
            try:
                runs.append(_oracle_run(f"learning={learning} writes={wf:.0%} {dist}", store, shadow, spec, universe))
            finally:
                store.close()

    # Level models are built over a settled store, then only read.
    opts = small_store_options(learning_mode=LEVEL, cba_mode=ALWAYS)
    store = build_store(os.path.join(root, "oracle-level"), loaded, opts, order="random", seed=seed, value_size=value_size)
    shadow = ShadowMap(store.key_size, value_size)
    shadow.load(loaded)
    try:
        for i, dist in enumerate(("uniform", "zipfian")):
            spec = WorkloadSpec(ops=ops_per_trace, scan_fraction=0.05, distribution=dist, seed=seed + 10 + i, value_size=value_size)
            runs.append(_oracle_run(f"learning=level read-only {dist}", store, shadow, spec, universe))
    finally:
        store.close()
    return runs


# -- cost-benefit efficiency ------------------------------------------------------


@dataclass
class PhaseTotals:
    ops: int = 0
    foreground_seconds: float = 0.0
    learning_seconds: float = 0.0
    compaction_seconds: float = 0.0
    files_learned: int = 0
    live_files: int = 0
    live_learned: int = 0
    decisions: dict[str, int] = field(default_factory=dict)

    @property
    def total_seconds(self) -> float:
        return self.foreground_seconds + self.learning_seconds + self.compaction_seconds


def run_lockstep(stores: dict[str, Store], ops: Sequence[tuple[str, int]], value_size: int = 64, scan_length: int = 10) -> dict[str, PhaseTotals]:
    """Apply each op to every store before moving on; the store order rotates per op.

    Foreground time excludes inline maintenance, which is accounted as
    learning and compaction time instead.
    """
    names = list(stores)
    totals = {n: PhaseTotals() for n in names}
    start = {n: (s.learner.learn_seconds, s.counters.compaction_seconds, s.learner.files_learned, dict(s.learner.decisions)) for n, s in stores.items()}
    versions: dict[str, dict[int, int]] = {n: {} for n in names}
    ks = {n: s.key_size for n, s in stores.items()}
    order = names[:]
    for kind, k in ops:
        order.append(order.pop(0))
        for name in order:
            store = stores[name]
            key = encode_key(k, ks[name])
            m0 = store.counters.maintenance_seconds
            t0 = perf_counter()
            if kind == GET:
                store.get(key)
            elif kind == PUT:
                ver = versions[name].get(k, 0) + 1
                versions[name][k] = ver
                store.put(key, value_for(k, ver, value_size))
            elif kind == DELETE:
                store.delete(key)
            else:
                store.scan(key, scan_length)
            t = totals[name]
            t.foreground_seconds += perf_counter() - t0 - (store.counters.maintenance_seconds - m0)
            t.ops += 1
    for name, store in stores.items():
        store.wait_idle(timeout=600)
        learn0, comp0, files0, dec0 = start[name]
        t = totals[name]
        t.learning_seconds = store.learner.learn_seconds - learn0
        t.compaction_seconds = store.counters.compaction_seconds - comp0
        t.files_learned = store.learner.files_learned - files0
        t.decisions = {v.value: c - dec0.get(v, 0) for v, c in store.learner.decisions.items()}
        files = list(store.version.files())
        t.live_files = len(files)
        t.live_learned = sum(1 for m in files if m.model is not None)
    return totals


@dataclass
class CbaEfficiencyResult:
    write_phase: dict[str, PhaseTotals]
    read_phase: dict[str, PhaseTotals]

    @property
    def read_learned_ratio(self) -> float:
        a = self.read_phase[ALWAYS].live_learned
        return self.read_phase[CBA].live_learned / a if a else 1.0


def cba_efficiency(
    root: str,
    *,
    n_keys: int = 50_000,
    write_ops: int = 200_000,
    read_ops: int = 100_000,
    seed: int = 0,
    cost_per_point: Optional[float] = None,
    file_bytes: int = 64 * 1024,
    level_size_divisor: float = 10.0,
) -> CbaEfficiencyResult:
    """cba against always-learn on identical traces.

    Both stores start from one settled, fully learned load (the bootstrap),
    run the same write-heavy trace, then the same read-only trace.
    """
    keys = gen_dataset(DatasetSpec("normal", n_keys, seed))
    base = os.path.join(root, "cba-base")
    def opts(mode: str) -> Options:
        return small_store_options(
            max_file_bytes=file_bytes,
            memtable_bytes=file_bytes,
            level_size_divisor=level_size_divisor,
            t_wait_ms=50.0,
            cost_per_point=cost_per_point,
            cba_mode=mode,
        )

    build_store(base, keys, opts(ALWAYS), order="random", seed=seed).close()
    stores = {}
    for mode in (CBA, ALWAYS):
        path = os.path.join(root, f"cba-{mode}")
        if os.path.exists(path):
            shutil.rmtree(path)
        shutil.copytree(base, path)
        stores[mode] = Store(path, opts(mode))
    try:
        writes = list(gen_workload(WorkloadSpec(ops=write_ops, write_fraction=0.5, distribution="uniform", seed=seed + 1), keys))
        write_phase = run_lockstep(stores, writes)
        reads = list(gen_workload(WorkloadSpec(ops=read_ops, distribution="uniform", seed=seed + 2), keys))
        read_phase = run_lockstep(stores, reads)
    finally:
        for s in stores.values():
            s.close()
    return CbaEfficiencyResult(write_phase, read_phase)


# -- measurement study -------------------------------------------------------


@dataclass
class MeasurementRun:
    order: str
    levels: list[LevelFileReport]

    def populated(self) -> list[LevelFileReport]:
        return [r for r in self.levels if r.files]

    @property
    def lifetimes(self) -> list[float]:
        return [r.mean_lifetime for r in self.populated()]

    @property
    def negatives(self) -> list[float]:
        return [r.mean_neg for r in self.populated()]

    @property
    def total_negatives(self) -> float:
        return sum(r.mean_neg * r.files for r in self.levels)


@dataclass
class MeasurementStudy:
    random: MeasurementRun
    sequential: MeasurementRun

    @property
    def lifetime_increases_with_depth(self) -> bool:
        lives = self.random.lifetimes
        return len(lives) >= 3 and all(a < b for a, b in zip(lives, lives[1:]))

    @property
    def sequential_has_no_negatives(self) -> bool:
        return self.sequential.total_negatives == 0

    @property
    def negatives_higher_at_shallow_levels(self) -> bool:
        neg = self.random.negatives
        return len(neg) >= 2 and neg[0] > neg[-1]


def _study_run(path: str, keys: Sequence[int], order: str, options: Options, *, write_fraction: float, tick: float, seed: int, value_size: int) -> MeasurementRun:
    """Preload half the keys, then insert the rest interleaved with reads of inserted keys.

    Time is virtual and advances ``tick`` seconds per operation, so
    lifetimes are counted in operations and do not depend on machine speed.
    """
    clock = options.clock
    ordered = load_order(keys, order, seed)
    half = len(ordered) // 2
    shutil.rmtree(path, ignore_errors=True)
    store = Store(path, options)
    try:
        load_keys(store, ordered[:half], value_size)
        store.flush_memtable()
        store.wait_idle(timeout=600)
        store.compact_all()
        since = clock.now()
        rng = random.Random(seed + 1)
        inserted = half
        while inserted < len(ordered):
            if rng.random() < write_fraction:
                k = ordered[inserted]
                store.put(encode_key(k, store.key_size), value_for(k, 1, value_size))
                inserted += 1
            else:
                store.get(encode_key(ordered[rng.randrange(inserted)], store.key_size))
            clock.advance(tick)
        store.wait_idle(timeout=600)
        return MeasurementRun(order, report_file_stats(store, since=since))
    finally:
        store.close()


def measurement_study(
    root: str,
    *,
    n_keys: int = 120_000,
    write_fraction: float = 0.5,
    tick: float = 1e-3,
    seed: int = 0,
    value_size: int = 16,
    file_bytes: int = 32 * 1024,
    level_size_divisor: float = 20.0,
) -> MeasurementStudy:
    """Per-level lifetimes and internal lookups under a write-heavy run, random vs sequential load."""
    keys = gen_dataset(DatasetSpec("normal", n_keys, seed))

    def options() -> Options:
        return small_store_options(
            learning_mode=OFF,
            clock=VirtualClock(),
            memtable_bytes=file_bytes,
            max_file_bytes=file_bytes,
            level_size_divisor=level_size_divisor,
        )

    runs = {
        order: _study_run(os.path.join(root, f"study-{order}"), keys, order, options(), write_fraction=write_fraction, tick=tick, seed=seed, value_size=value_size)
        for order in ("random", "seq")
    }
    return MeasurementStudy(runs["random"], runs["seq"])

import random
from bisect import bisect_left

import pytest
from conftest import k, v

from learnedlsm.bench.experiments import small_store_options
from learnedlsm.engine import Store
from learnedlsm.errors import InvalidInputError
from learnedlsm.keys import decode_key, encode_key
from learnedlsm.lookup import (
    BASELINE_STEPS,
    LOAD_CHUNK,
    LOAD_DB,
    MODEL,
    lookup_in_file_baseline,
    lookup_in_file_model,
)
from learnedlsm.plr import PLRModel, Segment
from learnedlsm.sstable import SSTableMeta, Table, ValuePointer, build_sstable
from learnedlsm.version import Version, find_files


def settle(store: Store) -> None:
    store.flush_memtable()
    store.wait_idle()
    store.compact_all()


def fill_random(store: Store, n: int, seed: int = 0, overwrite: float = 0.3, delete: float = 0.05) -> dict[int, bytes]:
    rng = random.Random(seed)
    shadow: dict[int, bytes] = {}
    for step in range(n):
        i = rng.randrange(n * 2)
        r = rng.random()
        if r < delete and shadow:
            victim = rng.choice(list(shadow))
            store.delete(k(victim))
            del shadow[victim]
        else:
            val = v(i, step)
            store.put(k(i), val)
            shadow[i] = val
    return shadow


# -- basic operations ----------------------------------------------------------


def test_put_get(make_store):
    s = make_store()
    s.put(k(1), b"a")
    assert s.get(k(1)) == b"a"


def test_newest_write_wins(make_store):
    s = make_store()
    s.put(k(1), b"v1")
    s.put(k(1), b"v2")
    assert s.get(k(1)) == b"v2"
    settle(s)
    assert s.get(k(1)) == b"v2"


def test_delete(make_store):
    s = make_store()
    s.put(k(1), b"a")
    s.delete(k(1))
    assert s.get(k(1)) is None
    settle(s)
    assert s.get(k(1)) is None


def test_wrong_key_width_rejected(make_store):
    s = make_store()
    with pytest.raises(InvalidInputError):
        s.put(b"short", b"x")
    with pytest.raises(InvalidInputError):
        s.get(b"short")


def test_empty_store_get(make_store):
    s = make_store()
    value, recs = s.get_traced(k(5))
    assert value is None and recs == []


@pytest.mark.parametrize("models", [True, False])
def test_random_ops_match_shadow_map(make_store, models):
    s = make_store()
    shadow = fill_random(s, 20_000, seed=1)
    settle(s)
    s.learn_all()
    s.use_models = models
    assert len(s.learned_files()) > 0
    rng = random.Random(2)
    for _ in range(20_000):
        i = rng.randrange(40_000)
        assert s.get(k(i)) == shadow.get(i)
    paths = {p for p, _ in s.metrics.internal}
    assert paths == ({"model"} if models else {"baseline"})


def test_version_well_formed_after_workload(make_store):
    s = make_store()
    fill_random(s, 15_000, seed=4)
    s.version.check()
    settle(s)
    s.version.check()
    assert len(s.version.levels[0]) < s.options.l0_compaction_trigger


# -- negative internal lookups by load order -------------------------------------


def _lookup_counts(store: Store, keys) -> tuple[int, int]:
    pos = neg = 0
    for key in keys:
        _, recs = store.get_traced(k(key))
        pos += sum(r.positive for r in recs)
        neg += sum(not r.positive for r in recs)
    return pos, neg


def test_random_load_has_negative_lookups(make_store):
    s = make_store()
    keys = list(range(0, 60_000, 3))
    random.Random(5).shuffle(keys)
    for key in keys:
        s.put(k(key), v(key))
    s.flush_memtable()
    pos, neg = _lookup_counts(s, random.Random(6).sample(keys, 3000))
    assert pos == 3000
    assert neg > pos


def test_sequential_load_has_no_negative_lookups(make_store):
    s = make_store()
    keys = list(range(0, 60_000, 3))
    for key in keys:
        s.put(k(key), v(key))
    s.flush_memtable()
    pos, neg = _lookup_counts(s, random.Random(6).sample(keys, 3000))
    assert (pos, neg) == (3000, 0)


# -- candidate files -------------------------------------------------------------


def _meta(fid, level, lo, hi, seq=0):
    return SSTableMeta(fid, level, k(lo), k(hi), 10, 100, seq)


def test_find_files_empty_version():
    assert find_files(Version(), k(1)) == []


def test_find_files_single_l1_file():
    m = _meta(1, 1, 10, 20)
    ver = Version([[], [m, _meta(2, 1, 30, 40)]])
    assert find_files(ver, k(15)) == [m]


def test_find_files_overlapping_l0_then_levels():
    l0 = [_meta(1, 0, 0, 100, seq=5), _meta(2, 0, 40, 60, seq=9), _meta(3, 0, 45, 200, seq=7), _meta(4, 0, 70, 80, seq=8)]
    l1 = [_meta(5, 1, 0, 30), _meta(6, 1, 31, 90)]
    l2 = [_meta(7, 2, 50, 51), _meta(8, 2, 52, 1000)]
    ver = Version([l0, l1, l2])
    got = [m.file_id for m in find_files(ver, k(50))]
    assert got == [2, 3, 1, 6, 7]


def _brute_force(ver: Version, key: bytes) -> list[int]:
    l0 = sorted((m for m in ver.levels[0] if m.min_key <= key <= m.max_key), key=lambda m: -m.seq)
    deeper = [m for lv in ver.levels[1:] for m in lv if m.min_key <= key <= m.max_key]
    return [m.file_id for m in l0 + deeper]


def test_find_files_matches_brute_force(make_store):
    s = make_store()
    fill_random(s, 20_000, seed=7, delete=0.0)
    ver = s.version
    assert len([lv for lv in ver.levels if lv]) >= 2
    rng = random.Random(8)
    for _ in range(3000):
        key = k(rng.randrange(40_000))
        assert [m.file_id for m in s.find_files(key)] == _brute_force(ver, key)


def test_get_visits_candidates_newest_to_oldest(make_store):
    s = make_store()
    keys = list(range(30_000))
    random.Random(9).shuffle(keys)
    for key in keys:
        s.put(k(key), v(key))
    s.flush_memtable()
    seqs = {m.file_id: m.seq for m in s.version.levels[0]}
    rng = random.Random(10)
    for _ in range(2000):
        _, recs = s.get_traced(k(rng.randrange(30_000)))
        levels = [r.level for r in recs]
        assert levels == sorted(levels)
        l0 = [seqs[r.file_id] for r in recs if r.level == 0]
        assert l0 == sorted(l0, reverse=True)
        assert all(not r.positive for r in recs[:-1])


# -- per-file lookup paths -------------------------------------------------------


@pytest.fixture
def linear_file(tmp_path):
    """Keys 0, 2, 4, ... so odd keys are absent but inside the range."""
    path = str(tmp_path / "f.sst")
    recs = [(k(2 * i), ValuePointer(1, i, 8).encode()) for i in range(1000)]
    meta = build_sstable(recs, path, key_size=16, file_id=1)
    meta.table = Table(path, 16)
    return meta


def _exact_model(n: int, shift: float = 0.0) -> PLRModel:
    return PLRModel([Segment(0, 0.5, shift)], delta=8, num_points=n, min_key=0, max_key=2 * (n - 1))


def test_baseline_positive_records_all_steps(linear_file):
    found, rec = lookup_in_file_baseline(linear_file, k(500))
    assert ValuePointer.decode(found).offset == 250
    assert rec.positive and set(rec.steps) == set(BASELINE_STEPS)


def test_baseline_filter_reject_skips_block_load(linear_file):
    misses = [i for i in range(1, 2000, 2) if not linear_file.table.filter.may_contain(k(i))]
    assert misses
    found, rec = lookup_in_file_baseline(linear_file, k(misses[0]))
    assert found is None and LOAD_DB not in rec.steps


def test_baseline_filter_false_positive_loads_block(linear_file):
    fps = [i for i in range(1, 2000, 2) if linear_file.table.filter.may_contain(k(i))]
    assert fps, "no in-range false positive among 1000 probes"
    found, rec = lookup_in_file_baseline(linear_file, k(fps[0]))
    assert found is None and not rec.positive and LOAD_DB in rec.steps


def test_model_exact_prediction_needs_no_search(linear_file):
    found, rec = lookup_in_file_model(linear_file, k(600), _exact_model(1000))
    assert ValuePointer.decode(found).offset == 300
    assert rec.path == MODEL and rec.probes == 0


def test_model_miss_by_three_found_by_search(linear_file):
    found, rec = lookup_in_file_model(linear_file, k(600), _exact_model(1000, shift=3.0))
    assert ValuePointer.decode(found).offset == 300
    assert rec.probes > 0


def test_model_filter_reject_skips_chunk_load(linear_file):
    miss = next(i for i in range(1, 2000, 2) if not linear_file.table.filter.may_contain(k(i)))
    found, rec = lookup_in_file_model(linear_file, k(miss), _exact_model(1000))
    assert found is None and LOAD_CHUNK not in rec.steps


def test_model_out_of_range_is_negative(linear_file):
    found, rec = lookup_in_file_model(linear_file, k(5000), _exact_model(1000))
    assert found is None and not rec.positive


@pytest.mark.parametrize("dataset", ["linear", "seg1pct", "seg10pct", "normal"])
def test_path_equivalence_fuzz(make_store, dataset):
    from learnedlsm.bench.datasets import DatasetSpec, gen_dataset

    s = make_store()
    keys = gen_dataset(DatasetSpec(dataset, 20_000, 3))
    order = keys[:]
    random.Random(1).shuffle(order)
    for key in order:
        s.put(k(key), v(key))
    s.flush_memtable()
    s.learn_all()
    rng = random.Random(2)
    lo, hi = keys[0], keys[-1]
    probes = [rng.choice(keys) for _ in range(1500)] + [rng.randint(lo, hi) for _ in range(1500)]
    checked = 0
    for key in probes:
        for meta in s.find_files(k(key)):
            assert meta.model is not None
            a, _ = lookup_in_file_model(meta, k(key))
            b, _ = lookup_in_file_baseline(meta, k(key))
            assert a == b
            checked += 1
    assert checked > 3000


# -- scans -------------------------------------------------------------------------


def test_scan_limit_zero(make_store):
    s = make_store()
    s.put(k(1), b"a")
    assert s.scan(k(0), 0) == []


def test_scan_contiguous(make_store):
    s = make_store()
    for i in range(5000):
        s.put(k(i), v(i))
    settle(s)
    s.learn_all()
    got = s.scan(k(1234), 10)
    assert got == [(k(i), v(i)) for i in range(1234, 1244)]


def test_scan_matches_sorted_oracle(make_store):
    s = make_store()
    shadow = fill_random(s, 15_000, seed=11)
    s.learn_all()
    ordered = sorted(shadow)
    rng = random.Random(12)
    for _ in range(300):
        start = rng.randrange(30_000)
        limit = rng.randrange(0, 40)
        i = bisect_left(ordered, start)
        expect = [(k(x), shadow[x]) for x in ordered[i : i + limit]]
        assert s.scan(k(start), limit) == expect


# -- flush, compaction, recovery -----------------------------------------------------


def test_flush_writes_one_file(make_store):
    s = make_store(memtable_bytes=1 << 30, max_file_bytes=1 << 30)
    keys = random.Random(0).sample(range(10**6), 1000)
    for key in keys:
        s.put(k(key), v(key))
    s.put(k(keys[0]), b"latest")
    (meta,) = s.flush_memtable()
    assert meta.level == 0 and meta.record_count == 1000
    assert (decode_key(meta.min_key), decode_key(meta.max_key)) == (min(keys), max(keys))
    assert s.get(k(keys[0])) == b"latest"


def test_no_compaction_under_limits(make_store):
    s = make_store()
    s.put(k(1), b"a")
    s.flush_memtable()
    assert s.pick_compaction() is None


def test_compaction_keeps_newest(make_store):
    s = make_store(l0_compaction_trigger=100)
    shadow = {}
    for rnd in range(4):
        for i in range(0, 3000, rnd + 1):
            s.put(k(i), v(i, rnd))
            shadow[i] = v(i, rnd)
        s.flush_memtable()
    assert len(s.version.levels[0]) >= 4
    job = s.pick_compaction()
    assert job is None or job.level == 0
    s.options.l0_compaction_trigger = 4
    s.compact_all()
    assert not s.version.levels[0]
    assert {decode_key(key): val for key, val in s.iter_all()} == shadow


def test_reopen_recovers_data_and_models(tmp_path):
    path = str(tmp_path / "db")
    opts = small_store_options()
    s = Store(path, opts)
    shadow = fill_random(s, 10_000, seed=13)
    settle(s)
    s.learn_all()
    learned = {m.file_id for m in s.learned_files()}
    s.close()
    s = Store(path, small_store_options(), create_if_missing=False)
    try:
        assert {m.file_id for m in s.learned_files()} == learned
        assert {decode_key(key): val for key, val in s.iter_all()} == shadow
        for i in list(shadow)[:2000]:
            assert s.get(k(i)) == shadow[i]
    finally:
        s.close()


def test_unflushed_writes_survive_clean_close(tmp_path):
    path = str(tmp_path / "db")
    s = Store(path, small_store_options(memtable_bytes=1 << 30))
    s.put(k(1), b"kept")
    s.close()
    s = Store(path, small_store_options())
    try:
        assert s.get(k(1)) == b"kept"
    finally:
        s.close()


def test_key_size_fixed_at_creation(tmp_path):
    path = str(tmp_path / "db")
    s = Store(path, small_store_options(key_size=8))
    s.put(encode_key(5, 8), b"x")
    s.close()
    with pytest.raises(InvalidInputError):
        Store(path, small_store_options(key_size=12))

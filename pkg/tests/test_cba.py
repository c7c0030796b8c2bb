import random
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from learnedlsm.bench.datasets import DatasetSpec, gen_dataset
from learnedlsm.cba import (
    PB,
    PM,
    STATS_COLUMNS,
    CostBenefitAnalyzer,
    Verdict,
    calibrate_cost_per_point,
    decide,
    model_benefit,
)
from learnedlsm.lookup import BASELINE, MODEL, InternalLookupRecord
from learnedlsm.plr import fit_keys

US = 1e-6
MS = 1e-3


def rec(fid, positive, path=BASELINE, seconds=5 * US, level=1) -> InternalLookupRecord:
    return InternalLookupRecord(fid, level, positive, path, {"step": seconds})


def analyzer(**kw) -> CostBenefitAnalyzer:
    args = dict(cost_per_point=1e-8, short_lived=0.1, s_min=10)
    args.update(kw)
    return CostBenefitAnalyzer(**args)


# -- statistics ----------------------------------------------------------------


def test_single_positive_lookup():
    a = analyzer()
    a.on_file_created(1, 1, 100, 0.0)
    a.record_internal_lookup(rec(1, True, seconds=6 * US))
    fs = a.files[1]
    assert (fs.n_pos, fs.n_neg) == (1, 0)
    assert fs.mean(PB) == pytest.approx(6 * US)


def test_interleaved_counts_match_event_log():
    rng = random.Random(0)
    a = analyzer()
    for fid in range(5):
        a.on_file_created(fid, 1, 100, 0.0)
    log = [(rng.randrange(5), rng.random() < 0.3, rng.choice([BASELINE, MODEL])) for _ in range(5000)]
    for fid, pos, path in log:
        a.record_internal_lookup(rec(fid, pos, path))
    for fid in range(5):
        fs = a.files[fid]
        assert fs.n_pos == sum(1 for f, p, _ in log if f == fid and p)
        assert fs.n_neg == sum(1 for f, p, _ in log if f == fid and not p)
        assert fs.timing.counts[PM] == sum(1 for f, p, m in log if f == fid and p and m == MODEL)


def test_lookup_after_delete_is_dropped():
    a = analyzer()
    a.on_file_created(1, 1, 100, 0.0)
    a.on_file_deleted(1, 1.0)
    a.record_internal_lookup(rec(1, True))
    assert a.dropped == 1


def test_level_mean_of_two_files():
    a = analyzer()
    for fid, n in ((1, 10), (2, 20)):
        a.on_file_created(fid, 2, 100, 0.0)
        for _ in range(n):
            a.record_internal_lookup(rec(fid, True, level=2))
        a.on_file_deleted(fid, 1.0)
    assert a.levels[2].mean_n_pos == 15


def test_short_lived_file_leaves_aggregates_unchanged():
    a = analyzer(short_lived=0.1)
    a.on_file_created(1, 1, 100, 0.0)
    a.record_internal_lookup(rec(1, True))
    a.on_file_deleted(1, 0.05)
    lv = a.levels[1]
    assert lv.completed == 0 and lv.sum_n_pos == 0 and lv.timing.counts == [0, 0, 0, 0]
    assert a.discarded_short_lived == 1


def test_aggregates_equal_batch_recomputation():
    rng = random.Random(1)
    a = analyzer(short_lived=0.5)
    events = {}
    for fid in range(300):
        level = rng.randrange(1, 4)
        created = rng.random() * 10
        a.on_file_created(fid, level, rng.randrange(50, 500), created)
        npos, nneg = rng.randrange(30), rng.randrange(30)
        for _ in range(npos):
            a.record_internal_lookup(rec(fid, True, level=level, seconds=rng.random() * 1e-5))
        for _ in range(nneg):
            a.record_internal_lookup(rec(fid, False, level=level, seconds=rng.random() * 1e-5))
        life = rng.random()
        a.on_file_deleted(fid, created + life)
        events[fid] = (level, a.history[-1].records, npos, nneg, life)
    for level in range(1, 4):
        kept = [e for e in events.values() if e[0] == level and e[4] >= 0.5]
        lv = a.levels[level]
        assert lv.completed == len(kept)
        assert lv.mean_n_pos == pytest.approx(sum(e[2] for e in kept) / len(kept))
        assert lv.mean_n_neg == pytest.approx(sum(e[3] for e in kept) / len(kept))
        assert lv.mean_records == pytest.approx(sum(e[1] for e in kept) / len(kept))


# -- cost ------------------------------------------------------------------------


def test_cost_of_empty_file_is_zero():
    assert analyzer().estimate_cost(0) == 0.0


def test_cost_is_per_point():
    assert analyzer(cost_per_point=10e-9).estimate_cost(100_000) == pytest.approx(1 * MS)


def test_calibrated_cost_tracks_full_file_build():
    cpp = calibrate_cost_per_point()
    keys = gen_dataset(DatasetSpec("normal", 131_072, 5))
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        fit_keys(keys, 8)
        best = min(best, time.perf_counter() - t0)
    c = analyzer(cost_per_point=cpp).estimate_cost(131_072)
    assert c / 2 <= best <= c * 2


# -- benefit and decisions ----------------------------------------------------------


def test_benefit_formula():
    b = model_benefit(4 * US, 2 * US, 1000, 6 * US, 3 * US, 500)
    assert b == pytest.approx(3.5 * MS)


def test_benefit_terms_floor_at_zero():
    assert model_benefit(2 * US, 4 * US, 1000, 3 * US, 6 * US, 500) == 0.0
    assert model_benefit(4 * US, 2 * US, 0, 6 * US, 3 * US, 0) == 0.0


def test_decisions():
    assert decide(0.0, 1 * MS).verdict is Verdict.SKIP
    d = decide(3.5 * MS, 1 * MS)
    assert d.verdict is Verdict.LEARN and d.priority == pytest.approx(2.5 * MS)
    assert decide(None, 1 * MS).verdict is Verdict.BOOTSTRAP


def test_fresh_level_bootstraps():
    a = analyzer()
    a.on_file_created(1, 3, 100, 0.0)
    assert a.should_learn(1).verdict is Verdict.BOOTSTRAP
    assert a.estimate_benefit(1) is None


def _trained(level_records: int = 100) -> CostBenefitAnalyzer:
    """Ten completed files: 40 negative and 20 positive lookups each, both paths timed."""
    a = analyzer()
    for fid in range(10):
        a.on_file_created(fid, 1, level_records, 0.0)
        path = BASELINE if fid % 2 else MODEL
        fast = path == MODEL
        for _ in range(40):
            a.record_internal_lookup(rec(fid, False, path, (2 if fast else 4) * US))
        for _ in range(20):
            a.record_internal_lookup(rec(fid, True, path, (3 if fast else 6) * US))
        a.on_file_deleted(fid, 1.0)
    return a


def test_benefit_from_level_statistics():
    a = _trained()
    a.on_file_created(100, 1, 100, 2.0)
    assert a.estimate_benefit(100) == pytest.approx(2 * US * 40 + 3 * US * 20)


def test_twice_the_mean_size_doubles_counts():
    a = _trained()
    a.on_file_created(100, 1, 100, 2.0)
    a.on_file_created(200, 1, 200, 2.0)
    assert a.estimate_benefit(200) == pytest.approx(2 * a.estimate_benefit(100))


def test_observed_counts_raise_the_estimate():
    a = _trained()
    a.on_file_created(100, 1, 100, 2.0)
    base = a.estimate_benefit(100)
    for _ in range(400):
        a.record_internal_lookup(rec(100, False, seconds=4 * US))
    assert a.estimate_benefit(100) > base


def test_learn_when_benefit_exceeds_cost():
    a = _trained()
    a.cost_per_point = 1e-9
    a.on_file_created(100, 1, 100, 2.0)
    d = a.should_learn(100)
    assert d.verdict is Verdict.LEARN
    assert d.priority == pytest.approx(d.b_model - d.c_model)
    a.cost_per_point = 1.0
    assert a.should_learn(100).verdict is Verdict.SKIP


def test_stats_dump_columns():
    a = _trained()
    lines = a.dump().splitlines()
    assert lines[0].split("\t") == list(STATS_COLUMNS)
    assert len(lines) == 1 + 10 + 1
    agg = lines[-1].split("\t")
    assert agg[:2] == ["1", "*"]


times = st.floats(min_value=0, max_value=1e-4)
counts = st.floats(min_value=0, max_value=1e6)


@settings(max_examples=300)
@given(times, times, counts, times, times, counts, st.floats(min_value=0, max_value=1e6), st.floats(min_value=0, max_value=1e-6))
def test_more_lookups_never_flip_learn_to_skip(tnb, tnm, nn, tpb, tpm, np_, extra, cpp):
    c = cpp * 10_000
    before = decide(model_benefit(tnb, tnm, nn, tpb, tpm, np_), c)
    after = decide(model_benefit(tnb, tnm, nn + extra, tpb, tpm, np_ + extra), c)
    if before.verdict is Verdict.LEARN:
        assert after.verdict is Verdict.LEARN


@settings(max_examples=300)
@given(times, times, counts, times, times, counts, st.integers(1, 10**6), st.integers(0, 10**6), st.floats(1e-10, 1e-6))
def test_more_records_never_flip_skip_to_learn(tnb, tnm, nn, tpb, tpm, np_, records, extra, cpp):
    b = model_benefit(tnb, tnm, nn, tpb, tpm, np_)
    before = decide(b, cpp * records)
    after = decide(b, cpp * (records + extra))
    if before.verdict is Verdict.SKIP:
        assert after.verdict is Verdict.SKIP

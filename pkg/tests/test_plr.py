import random
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from learnedlsm.errors import CorruptionError, InvalidInputError
from learnedlsm.plr import (
    HEADER_BYTES,
    SEGMENT_BYTES,
    OutOfRange,
    PLRModel,
    Segment,
    deserialize_model,
    fit_keys,
    max_error,
    predict,
    serialize_model,
    train_greedy_plr,
)

FIVE_POINTS = [(0, 0), (1, 1), (2, 2), (100, 3), (101, 4)]


def test_linear_keys_give_one_exact_segment():
    model = train_greedy_plr([(1000 + i, i) for i in range(10_000)], delta=8)
    assert len(model.segments) == 1
    assert all(model.position(1000 + i) == i for i in range(10_000))


def test_five_points_break_before_key_100():
    # Keys 0..2 bound the slope to [0.5, 1.5]; (100, 3) needs [0.02, 0.04].
    model = train_greedy_plr(FIVE_POINTS, delta=1)
    assert [s.start_key for s in model.segments] == [0, 100]


def test_predict_on_second_segment():
    model = train_greedy_plr(FIVE_POINTS, delta=1)
    r = predict(model, 100)
    assert (r.pos, r.lo, r.hi) == (3, 2, 4)


def test_identity_line_range():
    model = PLRModel([Segment(0, 1.0, 0.0)], delta=8, num_points=1000, min_key=0, max_key=999)
    r = predict(model, 42)
    assert (r.pos, r.lo, r.hi) == (42, 34, 50)


def test_range_clamped_at_both_ends():
    model = PLRModel([Segment(0, 1.0, 0.0)], delta=8, num_points=20, min_key=0, max_key=19)
    assert predict(model, 3).lo == 0
    assert predict(model, 18).hi == 19


def test_key_outside_range_is_signalled():
    model = train_greedy_plr([(1000 + i, i) for i in range(10_000)], delta=8)
    assert model.key_range == (1000, 10_999)
    with pytest.raises(OutOfRange):
        predict(model, 999)
    with pytest.raises(OutOfRange):
        predict(model, 11_000)


@pytest.mark.parametrize(
    "points",
    [
        [(1, 0), (1, 1)],
        [(2, 0), (1, 1)],
        [(1, 0), (2, 2)],
        [(1, 1)],
    ],
)
def test_bad_training_input_rejected(points):
    with pytest.raises(InvalidInputError):
        train_greedy_plr(points, delta=4)


def test_zero_delta_rejected():
    with pytest.raises(InvalidInputError):
        fit_keys([1, 2, 3], delta=0)


def test_serialize_roundtrip():
    rng = random.Random(3)
    keys = sorted({rng.getrandbits(100) for _ in range(5000)})
    model = fit_keys(keys, 4)
    back = deserialize_model(serialize_model(model))
    assert back == model
    assert back.key_range == model.key_range


def test_empty_model_not_serializable():
    with pytest.raises(InvalidInputError):
        serialize_model(PLRModel([], 8, 0, 0, 0))


def test_serialized_size_per_segment():
    segs = [Segment(i * 1000, 0.001, float(i)) for i in range(900)]
    blob = serialize_model(PLRModel(segs, 8, 900, 0, 899_999))
    assert SEGMENT_BYTES <= 40
    assert len(blob) == HEADER_BYTES + 900 * SEGMENT_BYTES
    assert len(blob) <= 900 * 40 + HEADER_BYTES


@pytest.mark.parametrize("mutate", ["truncate", "flip", "magic"])
def test_corrupt_blob_rejected(mutate):
    blob = bytearray(serialize_model(fit_keys(list(range(0, 3000, 3)), 8)))
    if mutate == "truncate":
        blob = blob[:-5]
    elif mutate == "flip":
        blob[HEADER_BYTES] ^= 0xFF
    else:
        blob[0:4] = b"XXXX"
    with pytest.raises(CorruptionError):
        deserialize_model(bytes(blob))


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.integers(min_value=0, max_value=(1 << 128) - 1), min_size=1, max_size=400, unique=True),
    st.integers(min_value=1, max_value=32),
)
def test_delta_soundness_property(raw_keys, delta):
    keys = sorted(raw_keys)
    model = train_greedy_plr(((k, i) for i, k in enumerate(keys)), delta)
    assert max_error(model, keys) <= delta
    for i, k in enumerate(keys):
        r = model.predict(k)
        assert r.lo <= i <= r.hi


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=1 << 40), min_size=2, max_size=300))
def test_soundness_with_clustered_gaps(gaps):
    keys = list(np.cumsum(gaps, dtype=object))
    model = fit_keys(keys, 2)
    assert max_error(model, keys) <= 2


def test_training_time_is_linear():
    rng = random.Random(0)
    sizes = [10_000, 100_000, 1_000_000]
    times = []
    for n in sizes:
        keys = sorted(set(rng.getrandbits(64) for _ in range(n)))
        t0 = time.perf_counter()
        fit_keys(keys, 8)
        times.append(time.perf_counter() - t0)
    slope, intercept = np.polyfit(sizes, times, 1)
    pred = np.polyval([slope, intercept], sizes)
    ss_res = float(np.sum((np.array(times) - pred) ** 2))
    ss_tot = float(np.sum((np.array(times) - np.mean(times)) ** 2))
    assert 1 - ss_res / ss_tot >= 0.95

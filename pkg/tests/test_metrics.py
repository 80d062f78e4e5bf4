import math

import numpy as np
import pytest
from _oracle import random_log, reference_scores
from conftest import make_table

from eccentricity.errors import ArgumentError
from eccentricity.metrics import (compute_item_rarity, compute_scores, compute_user_eccentricity,
                                  single_consumer_items)
from eccentricity.windowing import WindowConfig, assign_windows

DAY = 86_400


def _compare(events, width_days=7, dedupe="sum", standardization="per-window", exclusion=True):
    table = make_table(events)
    config = WindowConfig(width_days=width_days, dedupe=dedupe)
    wf = assign_windows(table, config)
    rt, scores = compute_scores(wf, standardization, exclusion)
    ref = reference_scores(events, width_days * DAY, wf.origin, dedupe,
                           per_window=standardization == "per-window", exclusion=exclusion)
    for k in range(rt.pair_items.size):
        key = (table.item_keys[rt.pair_items[k]], int(rt.pair_windows[k]))
        assert abs(rt.z[k] - ref["ir_z"][key]) < 1e-12
    assert len(ref["ir_z"]) == rt.pair_items.size
    for u, key in enumerate(table.user_keys):
        assert abs(scores.user_z[u] - ref["ue_z"][key]) < 1e-12
    for i, key in enumerate(table.item_keys):
        assert abs(scores.item_raw[i] - ref["ie_raw"][key]) < 1e-12
        if key in ref["ie_z"]:
            assert abs(scores.item_z[i] - ref["ie_z"][key]) < 1e-12
        else:
            assert np.isnan(scores.item_z[i])
            assert bool(scores.excluded[i]) is True
    return table, rt, scores


@pytest.mark.parametrize("seed", range(50))
def test_pipeline_matches_naive_reference(seed):
    _compare(random_log(seed))


@pytest.mark.parametrize("seed", range(10))
def test_reference_last_dedupe_global(seed):
    _compare(random_log(100 + seed), width_days=3, dedupe="last", standardization="global")


@pytest.mark.parametrize("seed", range(10))
def test_reference_without_exclusion(seed):
    _compare(random_log(200 + seed), exclusion=False)


def test_hand_worked_example(tiny_events):
    table, rt, scores = _compare(tiny_events)
    # window 0: x has 3 users, y has 2, z has 1
    raw = np.array([-math.log(3), -math.log(2), 0.0])
    mu, sd = raw.mean(), raw.std()
    x0 = rt.lookup(table.item_id("x"), 0)
    assert rt.n_users[x0] == 3
    assert rt.z[x0] == pytest.approx((raw[0] - mu) / sd, abs=1e-15)
    # window 1 has three single-consumer items: degenerate → zeros
    assert np.all(rt.z[rt.pair_windows == 1] == 0.0)
    # w only ever had one consumer
    assert scores.excluded[table.item_id("w")]
    # z is active in both windows but always with the same single consumer
    assert scores.excluded[table.item_id("z")]
    assert not scores.excluded[table.item_id("y")]
    assert scores.item_raw[table.item_id("z")] == pytest.approx(scores.user_z[table.user_id("c")])


def test_log_base_unobservable():
    for seed in range(20):
        wf = assign_windows(make_table(random_log(300 + seed)), WindowConfig(width_days=3))
        a = compute_item_rarity(wf)
        b = compute_item_rarity(wf, log_base=10)
        assert np.max(np.abs(a.z - b.z)) < 1e-9
        multi = a.n_users > 1
        np.testing.assert_allclose(b.raw[multi], a.raw[multi] / math.log(10), rtol=1e-14)


def test_feedback_scale_invariance():
    events = random_log(7)
    scaled = [(u, i, 10.0 * v, ts) for u, i, v, ts in events]
    _, s1 = compute_scores(assign_windows(make_table(events), WindowConfig(7)))
    _, s2 = compute_scores(assign_windows(make_table(scaled), WindowConfig(7)))
    np.testing.assert_allclose(s1.user_z, s2.user_z, atol=1e-12)
    np.testing.assert_allclose(s1.item_z, s2.item_z, atol=1e-12, equal_nan=True)


@pytest.mark.parametrize("seed", range(20))
def test_standardized_moments(seed):
    wf = assign_windows(make_table(random_log(400 + seed)), WindowConfig(width_days=7))
    _, scores = compute_scores(wf)
    for z in (scores.user_z[scores.active_users], scores.item_z[scores.retained_items]):
        if z.size == 0 or np.all(z == 0):
            continue
        assert abs(z.mean()) < 1e-9
        assert abs(z.std() - 1.0) < 1e-9


def test_single_user_log_degenerates_to_zero():
    t0 = 1_388_534_400
    events = [("solo", f"i{k}", 1.0, t0 + k * 3600) for k in range(5)]
    _, scores = compute_scores(assign_windows(make_table(events)))
    assert np.all(scores.user_z == 0.0)
    assert scores.excluded.all()


def test_single_consumer_items_without_rarity_table(tiny_events):
    wf = assign_windows(make_table(tiny_events), WindowConfig(7))
    rt = compute_item_rarity(wf)
    np.testing.assert_array_equal(single_consumer_items(wf), single_consumer_items(wf, rt))


def test_threads_bit_identical():
    from eccentricity.synth import SynthConfig, generate

    table, _ = generate(SynthConfig(n_users=500, n_items=800, n_events=150_000, seed=3))
    wf = assign_windows(table)
    _, one = compute_scores(wf, threads=1)
    _, four = compute_scores(wf, threads=4)
    np.testing.assert_array_equal(one.user_z, four.user_z)
    np.testing.assert_array_equal(one.item_z, four.item_z)


def test_mismatched_rarity_table_rejected(tiny_events):
    wf = assign_windows(make_table(tiny_events), WindowConfig(7))
    other = assign_windows(make_table(random_log(1)), WindowConfig(7))
    with pytest.raises(ArgumentError):
        compute_user_eccentricity(wf, compute_item_rarity(other))


def test_unknown_standardization_rejected(tiny_events):
    wf = assign_windows(make_table(tiny_events), WindowConfig(7))
    with pytest.raises(ArgumentError):
        compute_item_rarity(wf, "robust")

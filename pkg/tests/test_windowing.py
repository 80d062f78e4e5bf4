import numpy as np
import pytest
from conftest import make_table

from eccentricity.errors import ConfigError
from eccentricity.windowing import DAY, WindowConfig, assign_windows, parse_origin, window_census

T0 = 1_388_534_400  # 2014-01-01T00:00:00Z


def test_boundaries_are_half_open():
    events = [("a", "x", 1.0, T0), ("a", "x", 1.0, T0 + 7 * DAY - 1), ("a", "x", 1.0, T0 + 7 * DAY)]
    wf = assign_windows(make_table(events), WindowConfig(width_days=7))
    np.testing.assert_array_equal(wf.windows, [0, 1])
    np.testing.assert_array_equal(wf.value, [2.0, 1.0])
    np.testing.assert_array_equal(wf.count, [2, 1])


def test_auto_origin_truncates_to_midnight():
    events = [("a", "x", 1.0, T0 + 5 * 3600), ("b", "x", 1.0, T0 + 27 * DAY + 23 * 3600)]
    wf = assign_windows(make_table(events))
    assert wf.origin == T0
    assert wf.n_windows == 1


def test_explicit_origin():
    events = [("a", "x", 1.0, T0 + 3 * DAY), ("a", "x", 1.0, T0 + 10 * DAY)]
    wf = assign_windows(make_table(events), WindowConfig(width_days=7, origin=T0 - 2 * DAY))
    np.testing.assert_array_equal(wf.windows, [0, 1])
    with pytest.raises(ConfigError):
        assign_windows(make_table(events), WindowConfig(width_days=7, origin=T0 + 4 * DAY))


def test_dedupe_last_takes_latest_timestamp():
    events = [("a", "x", 5.0, T0 + 100), ("a", "x", 2.0, T0 + 300), ("a", "x", 4.0, T0 + 200),
              ("a", "x", 3.0, T0 + 300)]
    wf = assign_windows(make_table(events), WindowConfig(dedupe="last"))
    np.testing.assert_array_equal(wf.value, [3.0])  # later row wins the tie at +300


def test_dedupe_sum():
    events = [("a", "x", 5.0, T0), ("a", "x", 2.0, T0 + 1), ("b", "x", 1.0, T0)]
    wf = assign_windows(make_table(events))
    assert sorted(wf.value.tolist()) == [1.0, 7.0]


def test_triples_sorted_and_unique(tiny_events):
    wf = assign_windows(make_table(tiny_events), WindowConfig(width_days=7))
    key = (wf.users * wf.n_items + wf.items) * wf.n_windows + wf.windows
    assert np.all(np.diff(key) > 0)
    assert wf.value.sum() == pytest.approx(sum(e[2] for e in tiny_events))


def test_census_fills_gaps():
    events = [("a", "x", 1.0, T0), ("b", "y", 1.0, T0 + 1), ("a", "x", 1.0, T0 + 15 * DAY)]
    census = window_census(assign_windows(make_table(events), WindowConfig(width_days=7)))
    np.testing.assert_array_equal(census.window, [0, 1, 2])
    np.testing.assert_array_equal(census.events, [2, 0, 1])
    np.testing.assert_array_equal(census.items, [2, 0, 1])
    np.testing.assert_array_equal(census.users, [2, 0, 1])
    assert list(census.to_frame().columns) == ["window", "events", "active_items", "active_users"]


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_invalid_width(bad):
    with pytest.raises(ConfigError):
        WindowConfig(width_days=bad)


def test_parse_origin():
    assert parse_origin("auto") is None
    assert parse_origin("1388534400") == T0
    assert parse_origin("2014-01-01") == T0
    assert parse_origin("2014-01-01T01:00:00+01:00") == T0
    with pytest.raises(ConfigError):
        parse_origin("yesterday")

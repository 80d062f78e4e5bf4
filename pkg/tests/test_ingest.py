import numpy as np
import pytest
from conftest import make_table

from eccentricity.errors import ArgumentError, ValidationError
from eccentricity.ingest import (EventTable, parse_events, read_item_metadata, restrict, validate_table,
                                 write_events_csv)


def _write(tmp_path, text, name="log.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_generic_csv_interns_first_appearance(tmp_path):
    p = _write(tmp_path, "user_id,item_id,value,timestamp\nbob,song,2,100\nann,song,1,50\nbob,tune,1.5,70\n")
    t = parse_events(p, "generic-csv")
    assert list(t.user_keys) == ["bob", "ann"]
    assert list(t.item_keys) == ["song", "tune"]
    np.testing.assert_array_equal(t.users, [0, 1, 0])
    np.testing.assert_array_equal(t.values, [2.0, 1.0, 1.5])
    np.testing.assert_array_equal(t.timestamps, [100, 50, 70])
    assert t.pairs() == [("bob", "song"), ("ann", "song"), ("bob", "tune")]


def test_numeric_looking_keys_stay_strings(tmp_path):
    p = _write(tmp_path, "user_id,item_id,value,timestamp\n007,01,1,10\n7,1,1,11\n")
    t = parse_events(p, "generic-csv")
    assert t.n_users == 2 and t.n_items == 2
    assert t.user_id("007") == 0


def test_movielens_schema(tmp_path):
    p = _write(tmp_path, "userId,movieId,rating,timestamp\n1,31,2.5,1260759144\n1,1029,3.0,1260759179\n")
    t = parse_events(p, "movielens-ratings")
    assert t.schema_tag == "movielens-ratings"
    np.testing.assert_array_equal(t.values, [2.5, 3.0])


def test_movielens_rating_out_of_range(tmp_path):
    p = _write(tmp_path, "userId,movieId,rating,timestamp\n1,31,2.5,1\n1,32,7,2\n")
    with pytest.raises(ValidationError, match=r"line 3, field 'rating'"):
        parse_events(p, "movielens-ratings")


def test_playlog_tsv_headerless_and_ms(tmp_path):
    p = _write(tmp_path, "u1\tt1\t1400000000123\nu2\tt1\t1400000001999\n", "plays.tsv")
    t = parse_events(p, "playlog-tsv", timestamp_unit="ms")
    np.testing.assert_array_equal(t.timestamps, [1400000000, 1400000001])
    np.testing.assert_array_equal(t.values, [1.0, 1.0])


def test_bad_timestamp_names_line_and_field(tmp_path):
    p = _write(tmp_path, "user_id,item_id,value,timestamp\na,b,1,10\na,c,1,soon\n")
    with pytest.raises(ValidationError, match=r"line 3, field 'timestamp'"):
        parse_events(p, "generic-csv")


def test_non_positive_value_rejected(tmp_path):
    p = _write(tmp_path, "user_id,item_id,value,timestamp\na,b,0,10\n")
    with pytest.raises(ValidationError, match="field 'value'"):
        parse_events(p, "generic-csv")


def test_empty_key_rejected(tmp_path):
    p = _write(tmp_path, "user_id,item_id,value,timestamp\n,b,1,10\n")
    with pytest.raises(ValidationError, match="field 'user_id'"):
        parse_events(p, "generic-csv")


def test_skip_bad_rows_counts(tmp_path):
    text = "user_id,item_id,value,timestamp\na,b,1,10\na,c,x,11\nb,c,1,12,extra\nc,d,1,1.5\nd,e,2,13\n"
    p = _write(tmp_path, text)
    with pytest.raises(ValidationError):
        parse_events(p, "generic-csv")
    t = parse_events(p, "generic-csv", skip_bad_rows=True)
    assert t.n_events == 2
    assert t.skipped_rows == 3
    assert list(t.user_keys) == ["a", "d"]


def test_wrong_header(tmp_path):
    p = _write(tmp_path, "user,item,value,timestamp\na,b,1,10\n")
    with pytest.raises(ValidationError, match="expected header"):
        parse_events(p, "generic-csv")


def test_missing_file_and_bad_schema(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_events(tmp_path / "nope.csv", "generic-csv")
    with pytest.raises(ArgumentError):
        parse_events(tmp_path / "nope.csv", "parquet")


def test_header_only_file_is_empty_table(tmp_path):
    t = parse_events(_write(tmp_path, "user_id,item_id,value,timestamp\n"), "generic-csv")
    assert t.n_events == 0
    with pytest.raises(ValidationError):
        validate_table(t)


def test_table_is_read_only(tiny_events):
    t = make_table(tiny_events)
    with pytest.raises(ValueError):
        t.values[0] = 99.0


def test_validate_summary(tiny_events):
    s = validate_table(make_table(tiny_events))
    assert (s.n_users, s.n_items, s.n_events) == (3, 4, 9)
    # distinct pairs: ax bx cx ay by cz bw
    assert s.distinct_pairs == 7
    assert s.density == pytest.approx(7 / 12)


def test_restrict_redensifies(tiny_events):
    t = make_table(tiny_events)
    mask = np.array([k >= 6 for k in range(t.n_events)])
    sub, old_u, old_i = restrict(t, mask)
    assert sub.n_events == 3
    assert list(sub.user_keys) == ["a", "c", "b"]
    np.testing.assert_array_equal(t.user_keys[old_u], sub.user_keys)
    np.testing.assert_array_equal(t.item_keys[old_i], sub.item_keys)


def test_roundtrip_write(tmp_path):
    t = EventTable.from_columns(["a", "b"], ["x", "x"], [0.1 + 0.2, 1 / 3], [5, 6])
    write_events_csv(t, tmp_path / "e.csv")
    back = parse_events(tmp_path / "e.csv", "generic-csv")
    np.testing.assert_array_equal(back.values, t.values)
    np.testing.assert_array_equal(back.timestamps, t.timestamps)


def test_item_metadata(tmp_path, tiny_events):
    t = make_table(tiny_events)
    p = _write(tmp_path, "item_id,attribute,value\nx,artist,A\ny,artist,A\nz,artist,B\n", "meta.csv")
    meta = read_item_metadata(p, t)
    artist = meta.attribute("artist", t.n_items)
    assert artist[t.item_id("x")] == "A"
    assert artist[t.item_id("w")] is None
    bad = _write(tmp_path, "item_id,attribute,value\nq,artist,A\n", "bad.csv")
    with pytest.raises(ValidationError, match="'q'"):
        read_item_metadata(bad, t)


def test_roundtrip_exact_on_fallback_path(tmp_path):
    # the malformed row forces the string path; values must still parse exactly
    p = _write(tmp_path, "user_id,item_id,value,timestamp\na,x,0.30000000000000004,1\nb,x,oops,2\n"
                         "c,x,0.33333333333333331,3\n")
    t = parse_events(p, "generic-csv", skip_bad_rows=True)
    np.testing.assert_array_equal(t.values, [0.1 + 0.2, 1 / 3])

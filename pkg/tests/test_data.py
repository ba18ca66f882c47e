import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdt import data
from hdt.errors import DegenerateChannel, EmptySeries, MissingFile, NonNumericCell, SeriesTooShort


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_with_timestamp_column(tmp_path):
    p = write(tmp_path, "date,a,b\n2020-01-01,1,2\n2020-01-02,3,4.5\n")
    ts = data.load_csv(p, data.CsvOptions(timestamp_column=True))
    assert ts.channel_names == ("a", "b")
    np.testing.assert_array_equal(ts.values, [[1, 2], [3, 4.5]])


def test_bad_cell_reports_row_and_column(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n3,x\n")
    with pytest.raises(NonNumericCell) as err:
        data.load_csv(p)
    assert (err.value.row, err.value.col) == (2, 2)


@pytest.mark.parametrize("cell", ["nan", "inf", "", "NA"])
def test_missing_values_rejected(tmp_path, cell):
    p = write(tmp_path, f"a,b\n1,2\n3,{cell}\n")
    with pytest.raises(NonNumericCell):
        data.load_csv(p)


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(MissingFile):
        data.load_csv(tmp_path / "nope.csv")
    with pytest.raises(EmptySeries):
        data.load_csv(write(tmp_path, ""))
    with pytest.raises(EmptySeries):
        data.load_csv(write(tmp_path, "a,b\n"))


def test_csv_roundtrip_is_exact(tmp_path):
    vals = np.random.default_rng(0).normal(size=(20, 3)) * 1e3
    ts = data.TimeSeries(vals, ("x", "y", "z"))
    data.write_csv(ts, tmp_path / "o.csv")
    back = data.load_csv(tmp_path / "o.csv")
    np.testing.assert_array_equal(back.values, vals)
    assert back.channel_names == ts.channel_names


def test_series_is_read_only():
    ts = data.TimeSeries(np.zeros((4, 1)))
    with pytest.raises(ValueError):
        ts.values[0, 0] = 1.0


def test_split_floors_both_cuts():
    ts = data.TimeSeries(np.arange(17.0))
    tr, va, te = data.split(ts)
    assert (tr.n, va.n, te.n) == (10, 3, 4)
    assert data.split_bounds(17420, data.SplitSpec()) == (10452, 13936)


def test_split_ratios_must_sum_to_one():
    data.SplitSpec(0.7, 0.1, 0.2)
    with pytest.raises(ValueError):
        data.SplitSpec(0.7, 0.2, 0.2)


def test_split_too_short():
    with pytest.raises(SeriesTooShort):
        data.split(data.TimeSeries(np.arange(2.0)))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 500))
def test_split_partitions_series(n):
    ts = data.TimeSeries(np.arange(float(n)))
    try:
        parts = data.split(ts)
    except SeriesTooShort:
        return
    joined = np.concatenate([p.values for p in parts])
    np.testing.assert_array_equal(joined, ts.values)


def test_norm_roundtrip_and_training_stats():
    rng = np.random.default_rng(1)
    ts = data.TimeSeries(rng.normal(3.0, 2.0, size=(100, 2)))
    stats = data.fit_norm(ts)
    z = data.apply_norm(ts, stats)
    np.testing.assert_allclose(z.values.mean(0), 0, atol=1e-12)
    np.testing.assert_allclose(z.values.std(0), 1, atol=1e-12)
    np.testing.assert_allclose(data.invert_norm(z, stats).values, ts.values, atol=1e-12)


def test_constant_channel_is_degenerate():
    ts = data.TimeSeries(np.column_stack([np.arange(5.0), np.ones(5)]))
    with pytest.raises(DegenerateChannel) as err:
        data.fit_norm(ts)
    assert err.value.channel == 1


def test_windows():
    ts = data.TimeSeries(np.arange(10.0))
    w = data.make_windows(ts, 3, 2)
    assert len(w) == data.window_count(10, 3, 2) == 6
    np.testing.assert_array_equal(w[2].x[:, 0], [2, 3, 4])
    np.testing.assert_array_equal(w[2].y[:, 0], [5, 6])
    assert w[5].start_index == 5
    assert len(data.make_windows(data.TimeSeries(np.arange(5.0)), 3, 2)) == 1
    with pytest.raises(SeriesTooShort):
        data.make_windows(data.TimeSeries(np.arange(4.0)), 3, 2)


def test_subsequence_sampling():
    ts = data.TimeSeries(np.arange(50.0))
    a = data.sample_subsequence(ts, 20, np.random.default_rng(5))
    b = data.sample_subsequence(ts, 20, np.random.default_rng(5))
    np.testing.assert_array_equal(a.values, b.values)
    assert np.all(np.diff(a.values[:, 0]) == 1)
    full = data.sample_subsequence(ts, 50, np.random.default_rng(0))
    np.testing.assert_array_equal(full.values, ts.values)
    with pytest.raises(SeriesTooShort):
        data.sample_subsequence(ts, 51, np.random.default_rng(0))

import numpy as np
import pytest

from seastate.timeseries import (
    TimeSeries,
    from_values,
    load_csv,
    log_transform,
    resample_decimate,
    subtract_series,
)


def test_construction_masks_missing_with_nan():
    ts = TimeSeries([1.0, 2.0, 3.0], [True, False, True])
    assert len(ts) == 3
    assert ts.n_observed == 2
    assert np.isnan(ts.values[1])
    assert list(ts.observed) == [True, False, True]
    np.testing.assert_allclose(ts.observed_values(), [1.0, 3.0])


def test_construction_arrays_are_read_only():
    ts = from_values([1.0, 2.0])
    with pytest.raises(ValueError):
        ts.values[0] = 9.0
    with pytest.raises(ValueError):
        ts.observed[0] = False


def test_construction_rejects_bad_shapes():
    with pytest.raises(ValueError, match="length mismatch"):
        TimeSeries([1.0, 2.0], [True])
    with pytest.raises(ValueError, match="one-dimensional"):
        TimeSeries(np.zeros((2, 2)), np.ones((2, 2), dtype=bool))
    with pytest.raises(ValueError, match="at least one entry"):
        TimeSeries([], [])
    with pytest.raises(ValueError, match="no observed entries"):
        TimeSeries([1.0, 2.0], [False, False])


def test_from_values_treats_nan_as_missing():
    ts = from_values([1.0, np.nan, 3.0])
    assert ts.n_observed == 2
    assert not ts.observed[1]


def test_load_csv_with_header_and_named_column(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("time,flow\n1,10.5\n2,NA\n3,12.0\n")
    ts = load_csv(str(path), column="flow", missing_token="NA")
    assert len(ts) == 3
    assert not ts.observed[1]
    np.testing.assert_allclose(ts.observed_values(), [10.5, 12.0])


def test_load_csv_headerless_numeric_index(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("1.5\n2.5\n3.5\n")
    ts = load_csv(str(path), column=0)
    np.testing.assert_allclose(ts.values, [1.5, 2.5, 3.5])


def test_load_csv_header_autodetected_for_index_column(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("value\n4.0\n5.0\n")
    ts = load_csv(str(path), column=0)
    np.testing.assert_allclose(ts.values, [4.0, 5.0])


def test_load_csv_empty_cell_is_missing(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,b\n1,2\n3,\n5,6\n")
    ts = load_csv(str(path), column=1)
    assert not ts.observed[1]
    assert ts.n_observed == 2


def test_load_csv_errors(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="not found"):
        load_csv(str(path), column="c")
    with pytest.raises(ValueError, match="out of range"):
        load_csv(str(path), column=5)
    with pytest.raises(ValueError, match="cannot read"):
        load_csv(str(tmp_path / "absent.csv"))


def test_log_transform():
    ts = TimeSeries([1.0, np.e, 4.0], [True, True, False])
    out = log_transform(ts)
    np.testing.assert_allclose(out.values[:2], [0.0, 1.0])
    assert not out.observed[2]
    with pytest.raises(ValueError, match="positive"):
        log_transform(from_values([1.0, -2.0]))


def test_resample_decimate():
    ts = from_values(np.arange(10.0))
    out = resample_decimate(ts, 3)
    np.testing.assert_allclose(out.values, [0.0, 3.0, 6.0, 9.0])
    with pytest.raises(ValueError, match="positive"):
        resample_decimate(ts, 0)


def test_subtract_series_keeps_mask():
    ts = TimeSeries([5.0, 6.0, 7.0], [True, False, True])
    out = subtract_series(ts, [1.0, 1.0, 2.0])
    np.testing.assert_allclose(out.values[[0, 2]], [4.0, 5.0])
    assert not out.observed[1]
    with pytest.raises(ValueError, match="length mismatch"):
        subtract_series(ts, [1.0])

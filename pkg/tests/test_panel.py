import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shakernet.errors import (
    DataError,
    DuplicateCell,
    InvalidDimensions,
    MissingCell,
    NonNumericValue,
    UnknownView,
    WindowTooShort,
)
from shakernet.panel import (
    CsvSchema,
    PanelSeries,
    export_csv,
    ingest_csv,
    make_lag_pair,
    standardize,
    time_keys,
)


def write_rows(path, rows, header="timestamp,entity,view,value"):
    path.write_text(header + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")
    return path


def complete_rows():
    rows = []
    for t in range(3):
        for e in ("b", "a"):
            for v in ("price", "volume"):
                rows.append((t, e, v, t * 10 + (e == "b") + (v == "volume") * 0.5))
    return rows


def test_ingest_shape_and_order(tmp_path):
    p = ingest_csv(write_rows(tmp_path / "p.csv", complete_rows()))
    assert p.values.shape == (2, 3, 2)
    assert p.entities == ("a", "b")
    assert p.views == ("price", "volume")
    assert p.view_matrix("price")[2, 1] == 21.0


def test_ingest_missing_cell(tmp_path):
    with pytest.raises(MissingCell):
        ingest_csv(write_rows(tmp_path / "p.csv", complete_rows()[:-1]))


def test_ingest_ffill(tmp_path):
    rows = [r for r in complete_rows() if not (r[0] == 2 and r[1] == "a" and r[2] == "price")]
    p = ingest_csv(write_rows(tmp_path / "p.csv", rows), fill="ffill")
    assert p.view_matrix("price")[2, 0] == p.view_matrix("price")[1, 0]


def test_ingest_ffill_cannot_fill_first_timestamp(tmp_path):
    rows = [r for r in complete_rows() if not (r[0] == 0 and r[1] == "a" and r[2] == "price")]
    with pytest.raises(MissingCell):
        ingest_csv(write_rows(tmp_path / "p.csv", rows), fill="ffill")


def test_ingest_duplicate(tmp_path):
    rows = complete_rows()
    with pytest.raises(DuplicateCell):
        ingest_csv(write_rows(tmp_path / "p.csv", rows + [rows[0]]))


def test_ingest_non_numeric(tmp_path):
    rows = complete_rows()
    rows[3] = rows[3][:3] + ("abc",)
    with pytest.raises(NonNumericValue):
        ingest_csv(write_rows(tmp_path / "p.csv", rows))


def test_ingest_simple_return(tmp_path):
    rows = [(t, "x", "p", v) for t, v in enumerate((100, 102, 101))]
    p = ingest_csv(write_rows(tmp_path / "p.csv", rows), transform="simple-return")
    assert np.allclose(p.view_matrix("p")[:, 0], [0.02, 101 / 102 - 1])
    assert p.timestamps == ("1", "2")


def test_ingest_log_return(tmp_path):
    rows = [(t, "x", "p", v) for t, v in enumerate((100, 110))]
    p = ingest_csv(write_rows(tmp_path / "p.csv", rows), transform="log-return")
    assert np.isclose(p.values[0, 0, 0], np.log(1.1))


def test_ingest_custom_columns_and_view_filter(tmp_path):
    rows = [(r[3], r[2], r[1], r[0]) for r in complete_rows()]
    path = write_rows(tmp_path / "p.csv", rows, header="val,chan,ticker,day")
    p = ingest_csv(path, CsvSchema(timestamp="day", entity="ticker", view="chan", value="val"), views=["volume"])
    assert p.views == ("volume",)
    with pytest.raises(UnknownView):
        ingest_csv(path, CsvSchema(timestamp="day", entity="ticker", view="chan", value="val"), views=["x"])


def test_iso_dates_sorted_by_time(tmp_path):
    rows = [("2024-01-10", "a", "p", 3), ("2024-01-02", "a", "p", 1), ("2024-01-03", "a", "p", 2)]
    p = ingest_csv(write_rows(tmp_path / "p.csv", rows))
    assert p.timestamps == ("2024-01-02", "2024-01-03", "2024-01-10")
    assert list(p.values[0, :, 0]) == [1, 2, 3]


def test_time_keys_rejects_garbage():
    with pytest.raises(DataError):
        time_keys(["monday", "tuesday"])


def test_panel_invariants():
    with pytest.raises(DuplicateCell):
        PanelSeries(["v"], ["a", "a"], ["0"], np.zeros((1, 1, 2)))
    with pytest.raises(InvalidDimensions):
        PanelSeries(["v"], ["a"], ["0"], np.zeros((1, 2, 1)))
    with pytest.raises(DataError):
        PanelSeries(["v"], ["a"], ["1", "0"], np.zeros((1, 2, 1)))
    with pytest.raises(NonNumericValue):
        PanelSeries(["v"], ["a"], ["0"], np.full((1, 1, 1), np.nan))


def test_panel_values_read_only():
    p = PanelSeries(["v"], ["a"], ["0"], np.zeros((1, 1, 1)))
    with pytest.raises(ValueError):
        p.values[0, 0, 0] = 1.0


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 3).flatmap(
        lambda v: st.integers(1, 4).flatmap(
            lambda t: st.integers(1, 4).flatmap(
                lambda n: arrays(np.float64, (v, t, n),
                                 elements=st.floats(allow_nan=False, allow_infinity=False, width=64))
            )
        )
    )
)
def test_csv_round_trip_bit_exact(values):
    import tempfile
    from pathlib import Path

    V, L, N = values.shape
    p = PanelSeries([f"v{i}" for i in range(V)], [f"e{i}" for i in range(N)], [str(t) for t in range(L)], values)
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "p.csv"
        export_csv(p, path)
        q = ingest_csv(path)
    assert q.views == p.views and q.entities == p.entities and q.timestamps == p.timestamps
    assert np.array_equal(q.values.view(np.uint64), p.values.view(np.uint64))


def make_panel(L=31, N=3, V=2, seed=0):
    r = np.random.default_rng(seed)
    return PanelSeries([f"v{i}" for i in range(V)], [f"e{i}" for i in range(N)],
                       [str(t) for t in range(L)], r.normal(size=(V, L, N)))


def test_lag_pair_thirty_rows():
    pair = make_lag_pair(make_panel(), "v0")
    assert pair.X.shape == pair.Y.shape == (30, 3)


def test_lag_pair_shift_property():
    p = make_panel()
    pair = make_lag_pair(p, "v1", ("5", "20"))
    assert np.array_equal(pair.Y[:-1], pair.X[1:])
    assert np.array_equal(pair.Y[0], p.view_matrix("v1")[6])
    assert pair.S == 15


def test_lag_pair_errors():
    p = make_panel()
    with pytest.raises(WindowTooShort):
        make_lag_pair(p, "v0", ("3", "4"))
    with pytest.raises(UnknownView):
        make_lag_pair(p, "zz")


def test_standardize_zscores_each_series():
    z = standardize(make_panel(L=50))
    assert np.allclose(z.values.mean(axis=1), 0.0, atol=1e-12)
    assert np.allclose(z.values.std(axis=1), 1.0)


def test_standardize_constant_series_centred():
    vals = np.ones((1, 5, 2))
    vals[0, :, 1] = np.arange(5)
    z = standardize(PanelSeries(["v"], ["a", "b"], [str(t) for t in range(5)], vals))
    assert np.array_equal(z.values[0, :, 0], np.zeros(5))


def test_restrict_window_and_entities():
    p = make_panel()
    q = p.restrict(("2", "4"), views=["v1"], entities=["e2", "e0"])
    assert q.values.shape == (1, 3, 2)
    assert np.array_equal(q.values[0, :, 0], p.values[1, 2:5, 2])
    with pytest.raises(DataError):
        p.restrict(("4", "2"))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relm.ingest import (Column, DataError, Dataset, FeatureSchema, destandardize,
                         fit_standardization, infer_schema_from_dataset, load_csv,
                         split_holdout, standardize, write_csv)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _numeric(values, labels, period=None):
    schema = FeatureSchema((Column("x", "continuous"), Column("y", "label")))
    n = len(values)
    return Dataset(schema, {"x": np.asarray(values, float), "y": np.asarray(labels)},
                   np.zeros(n, dtype=np.int64) if period is None else np.asarray(period))


def test_load_two_rows_infers_roles(tmp_path):
    ds = load_csv(_write(tmp_path, "x,y\n0.5,1\n-1.5,0\n"))
    assert len(ds) == 2
    assert [c.role for c in ds.schema.columns] == ["continuous", "label"]
    np.testing.assert_array_equal(ds.labels, [1, 0])
    np.testing.assert_array_equal(ds.period, [0, 0])


def test_label_outside_01_names_row(tmp_path):
    with pytest.raises(DataError, match="row 3"):
        load_csv(_write(tmp_path, "x,y\n0.5,1\n1.0,2\n"))


def test_unparseable_cell_names_row_and_column(tmp_path):
    schema = FeatureSchema((Column("x", "continuous"), Column("y", "label")))
    with pytest.raises(DataError, match=r"row 2, column 'x'"):
        load_csv(_write(tmp_path, "x,y\nabc,1\n"), schema)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv")


def test_header_schema_mismatch(tmp_path):
    schema = FeatureSchema((Column("a", "continuous"), Column("y", "label")))
    with pytest.raises(DataError, match="header"):
        load_csv(_write(tmp_path, "x,y\n1,0\n"), schema)


def test_kaggle_shaped_file(tmp_path):
    rng = np.random.default_rng(0)
    header = ["Time"] + [f"V{i}" for i in range(1, 29)] + ["Amount", "Class"]
    lines = [",".join(header)]
    for i in range(20):
        vals = [str(float(i))] + [repr(float(v)) for v in rng.normal(size=28)] + ["12.5", str(i % 2)]
        lines.append(",".join(vals))
    ds = load_csv(_write(tmp_path, "\n".join(lines) + "\n"))
    assert len(ds.schema.continuous) == 30
    assert ds.schema.label == "Class"


def test_discrete_and_period_inference(tmp_path):
    ds = load_csv(_write(tmp_path, "color,x,label,period\nred,1,0,0\nblue,2,1,0\nred,3,1,1\n"))
    assert ds.schema.discrete[0].categories == ("blue", "red")
    assert ds.schema.timestamp == "period"
    np.testing.assert_array_equal(ds.period, [0, 0, 1])
    assert infer_schema_from_dataset(ds) == ds.schema


def test_decreasing_period_rejected(tmp_path):
    with pytest.raises(DataError, match="period"):
        load_csv(_write(tmp_path, "x,label,period\n1,0,1\n2,1,0\n"))


def test_schema_invariants():
    with pytest.raises(DataError):
        FeatureSchema((Column("x", "continuous"),))
    with pytest.raises(DataError):
        FeatureSchema((Column("a", "label"), Column("b", "label")))
    with pytest.raises(DataError):
        FeatureSchema((Column("c", "discrete", ("a", "a")), Column("y", "label")))
    with pytest.raises(DataError):
        FeatureSchema((Column("c", "discrete", ()), Column("y", "label")))


def test_csv_round_trip(tmp_path, blobs):
    write_csv(blobs, tmp_path / "b.csv")
    back = load_csv(tmp_path / "b.csv")
    assert back.schema == blobs.schema
    for name in blobs.schema.names:
        np.testing.assert_array_equal(back.columns[name], blobs.columns[name])


def test_standardization_values():
    stats = fit_standardization(_numeric([1.0, 3.0], [0, 1]))
    assert stats.mean[0] == 2.0 and stats.std[0] == 1.0 and not stats.constant[0]
    const = fit_standardization(_numeric([5.0, 5.0, 5.0], [0, 1, 0]))
    assert const.mean[0] == 5.0 and const.std[0] == 1.0 and const.constant[0]


def test_standardization_empty():
    with pytest.raises(DataError):
        fit_standardization(_numeric([], []))


def test_standardize_arithmetic():
    stats = fit_standardization(_numeric([1.0, 3.0], [0, 1]))
    out = standardize(_numeric([2.0, 4.0], [0, 1]), stats)
    np.testing.assert_array_equal(out.columns["x"], [0.0, 2.0])


def test_standardize_schema_mismatch():
    stats = fit_standardization(_numeric([1.0, 3.0], [0, 1]))
    other = Dataset(FeatureSchema((Column("z", "continuous"), Column("y", "label"))),
                    {"z": np.ones(2), "y": np.array([0, 1])}, np.zeros(2, dtype=np.int64))
    with pytest.raises(DataError):
        standardize(other, stats)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40))
def test_standardize_round_trip_and_centering(values):
    ds = _numeric(values, [i % 2 for i in range(len(values))])
    stats = fit_standardization(ds)
    z = standardize(ds, stats)
    assert abs(z.columns["x"].mean()) < 1e-9
    np.testing.assert_allclose(destandardize(z, stats).columns["x"], values, atol=1e-9, rtol=0)


def test_split_holdout_partition_and_determinism():
    ds = _numeric(np.arange(100.0), np.arange(100) % 2)
    train, hold = split_holdout(ds, 30, seed=4)
    assert len(train) == 70 and len(hold) == 30
    ids = np.concatenate([train.row_ids, hold.row_ids])
    assert sorted(ids) == list(range(100))
    assert hold.period.min() > train.period.max()
    train2, hold2 = split_holdout(ds, 30, seed=4)
    np.testing.assert_array_equal(hold.row_ids, hold2.row_ids)


def test_split_holdout_temporal_takes_last_rows(blobs):
    train, hold = split_holdout(blobs, 100, seed=0)
    np.testing.assert_array_equal(hold.row_ids, np.arange(len(blobs) - 100, len(blobs)))
    assert hold.period.min() > train.period.max()


@pytest.mark.parametrize("count", [0, 100, -1])
def test_split_holdout_range(count):
    with pytest.raises(DataError):
        split_holdout(_numeric(np.arange(100.0), np.arange(100) % 2), count, 0)

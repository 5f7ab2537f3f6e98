"""Dataset containers, CSV ingestion, and size summaries."""

import numpy as np
import pytest

from clustersmooth import (
    ColumnSchema,
    ParseError,
    SchemaError,
    ValidationError,
    drop_cluster,
    from_arrays,
    load_csv,
    size_summary,
)


def test_from_arrays_groups_by_first_appearance():
    ids = ["b", "b", "a", "a", "a"]
    y = [1.0, 2.0, 3.0, 4.0, 5.0]
    x = [0.1, 0.2, 0.3, 0.4, 0.5]
    ds = from_arrays(ids, y, x)
    assert ds.g_count == 2
    assert ds.clusters[0].id == "b"
    assert ds.clusters[1].id == "a"
    assert np.array_equal(ds.clusters[1].y, [3.0, 4.0, 5.0])
    assert ds.n == 5
    assert ds.d == 1


def test_duplicate_rows_are_kept():
    ds = from_arrays(["a", "a", "a"], [1.0, 1.0, 2.0], [0.5, 0.5, 0.6])
    assert ds.n == 3
    assert np.array_equal(ds.clusters[0].x[:, 0], [0.5, 0.5, 0.6])


def test_pooled_arrays_immutable():
    ds = from_arrays(["a", "b"], [1.0, 2.0], [0.1, 0.2])
    with pytest.raises(ValueError):
        ds.y_pooled[0] = 9.0
    with pytest.raises(ValueError):
        ds.clusters[0].x[0, 0] = 9.0


def test_cluster_level_column_must_be_constant():
    x = np.array([[0.1, 1.0], [0.2, 1.0], [0.3, 2.0], [0.4, 2.5]])
    with pytest.raises(ValidationError, match="varies within cluster 'b'"):
        from_arrays(["a", "a", "b", "b"], [1.0, 2.0, 3.0, 4.0], x, d_cls=1)


def test_nonfinite_rejected():
    with pytest.raises(ValidationError, match="non-finite"):
        from_arrays(["a", "a"], [1.0, np.nan], [0.1, 0.2])


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_load_csv_roundtrip(tmp_path):
    path = _write(
        tmp_path / "d.csv",
        "school,score,age\n"
        "s1,1.5,10\n"
        "s1,2.5,11\n"
        "s1,3.5,12\n"
        "s2,4.5,13\n"
        "s2,5.5,14\n"
        "s2,6.5,15\n",
    )
    ds = load_csv(path, ColumnSchema(cluster_col="school", y_col="score", x_ind_cols=("age",)))
    assert ds.g_count == 2
    assert ds.n == 6
    assert ds.d_ind == 1 and ds.d_cls == 0
    assert np.array_equal(ds.y_pooled, [1.5, 2.5, 3.5, 4.5, 5.5, 6.5])


def test_load_csv_missing_column(tmp_path):
    path = _write(tmp_path / "d.csv", "school,score\ns1,1.0\n")
    schema = ColumnSchema(cluster_col="school", y_col="score", x_ind_cols=("age",))
    with pytest.raises(SchemaError, match="age"):
        load_csv(path, schema)


def test_load_csv_bad_cell_names_row(tmp_path):
    path = _write(tmp_path / "d.csv", "school,score,age\ns1,1.0,10\ns1,oops,11\n")
    schema = ColumnSchema(cluster_col="school", y_col="score", x_ind_cols=("age",))
    with pytest.raises(ParseError, match="line 3"):
        load_csv(path, schema)


def test_load_csv_empty_file(tmp_path):
    path = _write(tmp_path / "d.csv", "school,score,age\n")
    schema = ColumnSchema(cluster_col="school", y_col="score", x_ind_cols=("age",))
    with pytest.raises(ValidationError, match="no data rows"):
        load_csv(path, schema)


def test_load_csv_cluster_level_varies(tmp_path):
    path = _write(
        tmp_path / "d.csv",
        "school,score,age,size\ns1,1.0,10,300\ns1,2.0,11,301\n",
    )
    schema = ColumnSchema(
        cluster_col="school", y_col="score", x_ind_cols=("age",), x_cls_cols=("size",)
    )
    with pytest.raises(ValidationError, match="s1"):
        load_csv(path, schema)


def test_size_summary_oversized_cluster_design():
    sizes = [20] * 99 + [100]
    ids = np.repeat([f"g{i}" for i in range(100)], sizes)
    n = sum(sizes)
    ds = from_arrays(ids, np.zeros(n), np.linspace(0, 1, n))
    s = size_summary(ds)
    assert s.n == 2080
    assert s.sum_sq_sizes == 49600
    assert s.max_size == 100
    assert s.g_count == 100


def test_size_summary_uniform_design():
    ids = np.repeat([f"g{i}" for i in range(100)], 20)
    ds = from_arrays(ids, np.zeros(2000), np.linspace(0, 1, 2000))
    s = size_summary(ds)
    assert s.n == 2000
    assert s.sum_sq_sizes == 40000
    assert s.sum_sq_sizes / s.n == 20.0


def test_size_summary_singleton():
    ds = from_arrays(["a"], [1.0], [0.5])
    s = size_summary(ds)
    assert (s.n, s.sum_sq_sizes, s.max_size, s.mean_size) == (1, 1, 1, 1.0)


def test_drop_cluster_basics():
    ds = from_arrays(["a", "a", "b"], [1.0, 2.0, 3.0], [0.1, 0.2, 0.3])
    kept = drop_cluster(ds, 0)
    assert kept.g_count == 1
    assert kept.clusters[0].id == "b"
    assert np.array_equal(kept.y_pooled, [3.0])
    assert size_summary(kept).n == ds.n - 2


def test_drop_only_cluster_gives_empty():
    ds = from_arrays(["a"], [1.0], [0.5])
    empty = drop_cluster(ds, 0)
    assert empty.is_empty
    assert empty.n == 0


def test_drop_cluster_bad_index():
    ds = from_arrays(["a"], [1.0], [0.5])
    with pytest.raises(ValidationError, match="out of range"):
        drop_cluster(ds, 3)

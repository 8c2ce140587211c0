import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchorbox.baselines import RadialRegion
from anchorbox.data import (ClusterSpec, DataError, binarize_median, cluster_coverage,
                            data_bounding_box, destandardize, from_arrays, generate_clusters,
                            generate_signal_dataset, load_csv, train_test_split)
from anchorbox.geometry import Box


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    ds = load_csv(write(tmp_path, "a,b,y\n1,2,0\n2,5,1\n3,2,1\n"), "y")
    assert ds.n == 3 and ds.dim == 2
    assert ds.feature_names == ["a", "b"]
    np.testing.assert_array_equal(ds.y, [0, 1, 1])
    np.testing.assert_allclose(ds.X.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(ds.X.std(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(ds.raw(), [[1, 2], [2, 5], [3, 2]])


def test_median_binarization_upper_class():
    assert list(binarize_median([1.0, 2.0, 3.0])) == [0, 1, 1]


def test_load_binarized(tmp_path):
    ds = load_csv(write(tmp_path, "x,t\n1,1.0\n2,2.0\n3,3.0\n"), "t", binarize=True)
    assert list(ds.y) == [0, 1, 1]


def test_missing_label_column(tmp_path):
    with pytest.raises(DataError, match="'target'"):
        load_csv(write(tmp_path, "a,b\n1,2\n"), "target")


def test_non_numeric_cell_located(tmp_path):
    with pytest.raises(DataError, match=r"row 3, column 'b'"):
        load_csv(write(tmp_path, "a,b,y\n1,2,0\n1,x,1\n"), "y")


def test_ragged_row(tmp_path):
    with pytest.raises(DataError, match="row 2"):
        load_csv(write(tmp_path, "a,b,y\n1,2\n"), "y")


def test_constant_column(tmp_path):
    with pytest.raises(DataError, match="'b' is constant"):
        load_csv(write(tmp_path, "a,b,y\n1,7,0\n2,7,1\n"), "y")


def test_bounding_box():
    assert data_bounding_box(np.array([[0, 1], [2, -1]])) == Box([0, -1], [2, 1])
    one = data_bounding_box(np.array([[3.0, 4.0]]))
    assert one == Box([3, 4], [3, 4])


@settings(max_examples=50)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3)))
def test_standardize_round_trip(X):
    if np.any(X.std(axis=0) < 1e-6 * (1 + np.abs(X).max())):
        return
    ds = from_arrays(X, np.zeros(len(X)))
    np.testing.assert_allclose(destandardize(ds.X, ds.mean, ds.std), X, rtol=1e-12, atol=1e-9)


def test_clusters_shape_and_determinism():
    a, ids = generate_clusters(3, np.random.default_rng(5))
    b, _ = generate_clusters(3, np.random.default_rng(5))
    assert a.n == 500 and a.dim == 3
    assert np.bincount(ids).tolist() == [100] * 5
    assert a.X.tobytes() == b.X.tobytes()
    np.testing.assert_array_equal(a.y, ids)


def test_cluster_means_match_generator():
    ds, ids = generate_clusters(4, np.random.default_rng(11))
    raw = ds.raw()
    means, stds = ds.meta["means"], ds.meta["stds"]
    assert np.all((stds >= 0.3) & (stds <= 1.0))
    for c in range(5):
        emp = raw[ids == c].mean(axis=0)
        assert np.all(np.abs(emp - means[c]) <= 3 * stds[c] / np.sqrt(100) + 1e-9)


def test_cluster_spec_sizes():
    ds, ids = generate_clusters(2, np.random.default_rng(0), ClusterSpec(n_clusters=3, cluster_size=7))
    assert ds.n == 21 and set(ids) == {0, 1, 2}


def test_coverage():
    ds, ids = generate_clusters(2, np.random.default_rng(1))
    assert cluster_coverage(data_bounding_box(ds), ds.X, ids, 2) == 1.0
    a = ds.X[0]
    assert cluster_coverage(Box(a, a), ds.X, ids, ids[0]) == pytest.approx(1 / 100)
    assert cluster_coverage(Box(a, a), ds.X, ids, (ids[0] + 1) % 5) == 0.0
    assert 0 <= cluster_coverage(RadialRegion(a, 0.5), ds.X, ids, ids[0]) <= 1
    with pytest.raises(DataError):
        cluster_coverage(Box(a, a), ds.X, ids, 9)


def test_split_is_partition():
    tr, te = train_test_split(100, np.random.default_rng(0))
    assert len(te) == 20 and len(tr) == 80
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(100))


def test_signal_dataset():
    ds = generate_signal_dataset(400, 3, 2, np.random.default_rng(0), noise=0.0)
    raw = ds.raw()
    np.testing.assert_array_equal(ds.y, (raw[:, 2] > 0).astype(int))
    with pytest.raises(ValueError):
        generate_signal_dataset(10, 3, 3, np.random.default_rng(0))

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsentry import prep
from gridsentry.errors import EmptyDatasetError, StratificationError, ValidationError
from gridsentry.simulate import make_benchmark_pair


@pytest.fixture(scope="module")
def bench():
    return make_benchmark_pair(0)


def dataset(labels, d=3, seed=0):
    labels = np.asarray(labels)
    x = np.random.default_rng(seed).normal(size=(len(labels), d))
    return prep.clean(x, labels)


def test_clean_identity_and_width(bench):
    ds = prep.clean(bench.train_record, bench.train_labels)
    assert len(ds) == bench.train_record.n_samples
    assert ds.features.shape[1] == 14
    assert ds.feature_names == bench.train_record.channel_names


def test_clean_drops_nan_row():
    x = np.arange(20.0).reshape(5, 4)
    x[2, 3] = np.nan
    ds = prep.clean(x, [0, 1, 2, 1, 0])
    assert len(ds) == 4
    assert ds.encoder.decode(ds.labels).tolist() == [0, 1, 1, 0]


def test_clean_all_missing():
    with pytest.raises(EmptyDatasetError):
        prep.clean(np.full((3, 2), np.inf), [0, 1, 0])


def test_split_exact_proportion():
    ds = dataset([0] * 50 + [1] * 50)
    sp = prep.stratified_split(ds, 0.2, seed=1)
    assert np.bincount(sp.test.labels).tolist() == [10, 10]
    assert len(sp.train) == 80


def test_split_determinism():
    ds = dataset(np.arange(300) % 7)
    a = prep.stratified_split(ds, 0.2, seed=4)
    b = prep.stratified_split(ds, 0.2, seed=4)
    assert np.array_equal(a.test_index, b.test_index)


def test_singleton_class_rejected():
    with pytest.raises(StratificationError):
        prep.stratified_split(dataset([0, 0, 0, 1]), 0.2)


def test_bad_fraction():
    with pytest.raises(ValidationError):
        prep.stratified_split(dataset([0, 0, 1, 1]), 1.0)


def test_benchmark_split_has_every_class(bench):
    split, _ = prep.prepare(bench.train_record, bench.train_labels, seed=0)
    assert split.train.n_classes == 18
    assert np.all(split.train.class_counts() > 0)
    assert np.all(split.test.class_counts() > 0)


def test_largest_remainder_tie_break():
    # quotas 1.5 / 1.5 / 1.0 with a total of 4: the lower class id takes the spare sample
    assert prep.stratified_test_counts(np.array([15, 15, 10]), 0.1).tolist() == [2, 1, 1]
    # every present class keeps at least one test sample
    assert prep.stratified_test_counts(np.array([5, 5, 5, 5]), 0.1).tolist() == [1, 1, 1, 1]


def test_scaler_symmetric_pair():
    s = prep.fit_scaler(np.array([[1.0], [3.0]]))
    assert s.mu.tolist() == [2.0] and s.sigma.tolist() == [1.0]
    assert prep.transform(s, np.array([[1.0], [3.0], [2.0]])).ravel().tolist() == [-1.0, 1.0, 0.0]


def test_scaler_zero_variance_warns():
    with pytest.warns(RuntimeWarning):
        s = prep.fit_scaler(np.array([[1.0, 5.0], [3.0, 5.0]]))
    assert s.sigma[1] == 1.0
    assert np.all(s.transform(np.array([[2.0, 5.0]]))[:, 1] == 0.0)


def test_prepare_standardizes_train_only(bench):
    split, scaler = prep.prepare(bench.train_record, bench.train_labels, seed=0)
    x = split.train.features
    assert np.all(np.abs(x.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(x.std(axis=0) - 1) < 1e-9)
    assert np.any(np.abs(split.test.features.mean(axis=0)) > 0)


def test_export_csv(tmp_path):
    ds = dataset([3, 3, 5, 5], d=2)
    ds.feature_names = ["a", "b"]
    prep.export_csv(ds, tmp_path / "x.csv")
    lines = (tmp_path / "x.csv").read_text().splitlines()
    assert lines[0] == "a,b,label"
    assert [ln.rsplit(",", 1)[1] for ln in lines[1:]] == ["3", "3", "5", "5"]


def test_balanced_class_weights():
    w = prep.class_weights(np.array([0, 0, 0, 1]))
    assert w.tolist() == pytest.approx([4 / 6, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=12, max_size=200), st.integers(0, 10_000))
def test_split_properties(labels, seed):
    labels = np.array(labels)
    counts = np.bincount(labels)
    if np.any((counts > 0) & (counts < 2)):
        with pytest.raises(StratificationError):
            prep.stratified_split(dataset(labels), 0.2, seed)
        return
    ds = dataset(labels)
    sp = prep.stratified_split(ds, 0.2, seed)
    assert np.intersect1d(sp.train_index, sp.test_index).size == 0
    assert np.array_equal(np.union1d(sp.train_index, sp.test_index), np.arange(len(ds)))
    test_counts = np.bincount(sp.test.labels, minlength=ds.n_classes)
    assert np.all(np.abs(test_counts - 0.2 * ds.class_counts()) <= 1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=6, max_size=60))
def test_scaler_inverse(values):
    x = np.array(values).reshape(-1, 2) if len(values) % 2 == 0 else np.array(values[:-1]).reshape(-1, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        s = prep.fit_scaler(x)
    back = s.inverse_transform(s.transform(x))
    assert np.allclose(back, x, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(x).max()))


@given(st.lists(st.integers(-3, 40), min_size=1, max_size=50))
def test_encoder_round_trip(labels):
    enc = prep.LabelEncoder.fit(labels)
    assert enc.decode(enc.encode(labels)).tolist() == labels
    assert enc.encode(labels).max() < enc.n_classes

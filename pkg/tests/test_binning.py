"""Bin layout fitting and the raw-to-bin transform."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aggforest.binning import FeatureKind, fit_bins, transform


def test_median_threshold_frozen():
    mapper = fit_bins([np.array([1.0, 2.0, 3.0, 4.0])], ["continuous"],
                      max_bins=2)
    fb = mapper.features[0]
    np.testing.assert_array_equal(fb.thresholds, [2.5])
    assert fb.n_bins == 2 and not fb.has_missing
    # A raw value equal to a threshold lands in the bin to its right.
    binned = transform([np.array([1.0, 2.0, 2.5, 3.0, 4.0])], mapper)
    np.testing.assert_array_equal(binned.entries[:, 0], [0, 0, 1, 1, 1])


def test_distinct_small_values_get_distinct_bins():
    rng = np.random.default_rng(3)
    for _ in range(20):
        values = rng.choice(np.arange(8, dtype=float), size=60)
        mapper = fit_bins([values], ["continuous"], max_bins=256)
        bins = transform([values], mapper).entries[:, 0]
        for a in np.unique(values):
            sel = values == a
            assert len(np.unique(bins[sel])) == 1
            for b in np.unique(values):
                if a < b:
                    assert bins[sel].max() < bins[values == b].min()


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2,
                max_size=200),
       st.integers(2, 32))
def test_binning_monotone_and_bounded(values, max_bins):
    col = np.asarray(values, dtype=np.float64)
    mapper = fit_bins([col], ["continuous"], max_bins)
    fb = mapper.features[0]
    assert 1 <= fb.n_bins <= max_bins
    bins = transform([col], mapper).entries[:, 0].astype(np.int64)
    assert bins.min() >= 0 and bins.max() < fb.n_plain_bins
    order = np.argsort(col, kind="stable")
    assert (np.diff(bins[order]) >= 0).all()


def test_nan_goes_to_reserved_missing_bin():
    col = np.array([0.0, 1.0, np.nan, 2.0, 3.0, np.nan])
    mapper = fit_bins([col], ["continuous"], max_bins=4)
    fb = mapper.features[0]
    assert fb.has_missing
    assert fb.missing_bin == fb.n_bins - 1
    assert fb.n_plain_bins <= 3       # the missing bin eats one budget slot
    binned = transform([col], mapper)
    got = binned.entries[:, 0]
    assert got[2] == fb.missing_bin and got[5] == fb.missing_bin
    assert (got[[0, 1, 3, 4]] < fb.missing_bin).all()
    assert binned.missing_bin[0] == fb.missing_bin


def test_missing_only_at_transform_time_errors():
    mapper = fit_bins([np.array([1.0, 2.0, 3.0])], ["continuous"], 8)
    with pytest.raises(ValueError, match="missing value seen at transform"):
        transform([np.array([1.0, np.nan])], mapper)


def test_categorical_frequency_ranked_bins_and_overflow():
    col = np.array(["a", "a", "a", "b", "b", "c", "d"], dtype=object)
    mapper = fit_bins([col], ["categorical"], max_bins=3)
    fb = mapper.features[0]
    assert fb.kind is FeatureKind.CATEGORICAL
    assert fb.n_bins == 3 and fb.overflow_bin == 2
    assert fb.categories["a"] == 0 and fb.categories["b"] == 1
    assert fb.categories["c"] == 2 and fb.categories["d"] == 2
    # Unseen modalities fall into the overflow bin when there is one.
    binned = transform([np.array(["d", "z", "a"], dtype=object)], mapper)
    np.testing.assert_array_equal(binned.entries[:, 0], [2, 2, 0])


def test_categorical_unseen_goes_to_missing_bin_when_present():
    col = np.array(["a", "b", None, "a"], dtype=object)
    mapper = fit_bins([col], ["categorical"], max_bins=8)
    fb = mapper.features[0]
    assert fb.has_missing and fb.n_bins == 3
    binned = transform([np.array(["b", "new", None], dtype=object)], mapper)
    np.testing.assert_array_equal(binned.entries[:, 0],
                                  [1, fb.missing_bin, fb.missing_bin])


def test_categorical_unseen_without_fallback_errors():
    mapper = fit_bins([np.array(["a", "b"], dtype=object)], ["categorical"], 8)
    with pytest.raises(ValueError, match="unseen category"):
        transform([np.array(["c"], dtype=object)], mapper)


def test_categorical_numeric_modalities():
    col = np.array([3, 3, 7, 7, 7, 11])
    mapper = fit_bins([col], ["categorical"], max_bins=16)
    fb = mapper.features[0]
    assert fb.categories == {7: 0, 3: 1, 11: 2}
    binned = transform([np.array([11, 3, 7])], mapper)
    np.testing.assert_array_equal(binned.entries[:, 0], [2, 1, 0])


def test_categorical_mixed_types_error():
    with pytest.raises(ValueError, match="mutually comparable"):
        fit_bins([np.array([1, "a"], dtype=object)], ["categorical"], 8)


def test_empty_string_counts_as_missing_category():
    col = np.array(["x", "", "y"], dtype=object)
    mapper = fit_bins([col], ["categorical"], max_bins=8)
    assert mapper.features[0].has_missing


def test_input_validation():
    with pytest.raises(ValueError, match="max_bins"):
        fit_bins([np.array([1.0])], ["continuous"], max_bins=1)
    with pytest.raises(ValueError, match="kinds"):
        fit_bins([np.array([1.0]), np.array([2.0])], ["continuous"], 8)
    with pytest.raises(ValueError, match="every value is missing"):
        fit_bins([np.array([np.nan, np.nan])], ["continuous"], 8)
    with pytest.raises(ValueError):
        fit_bins([], ["continuous"], 8)
    mapper = fit_bins([np.array([1.0, 2.0])], ["continuous"], 8)
    with pytest.raises(ValueError, match="features"):
        transform([np.array([1.0]), np.array([1.0])], mapper)


def test_two_dim_array_and_column_list_agree():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    kinds = ["continuous"] * 3
    a = transform(X, fit_bins(X, kinds, 8)).entries
    cols = [X[:, j] for j in range(3)]
    b = transform(cols, fit_bins(cols, kinds, 8)).entries
    np.testing.assert_array_equal(a, b)


def test_entry_dtype_tracks_bin_budget():
    rng = np.random.default_rng(1)
    col = rng.normal(size=50)
    assert transform([col], fit_bins([col], ["continuous"], 256)).entries.dtype == np.uint8
    assert transform([col], fit_bins([col], ["continuous"], 300)).entries.dtype == np.uint16

"""Bootstrap draws, feature subsampling, and stream determinism."""

import numpy as np
import pytest

from aggforest.sampling import (
    RandomSource,
    bootstrap,
    default_max_features,
    subsample_features,
)


def test_bootstrap_partitions_rows():
    for seed in range(20):
        sample = bootstrap(60, RandomSource(seed))
        assert sample.weights.sum() == 60
        assert (sample.weights[sample.itb_indices] > 0).all()
        assert (sample.weights[sample.oob_indices] == 0).all()
        merged = np.sort(np.concatenate([sample.itb_indices,
                                         sample.oob_indices]))
        np.testing.assert_array_equal(merged, np.arange(60))
        assert sample.n_oob > 0


def test_bootstrap_deterministic_per_stream():
    a = bootstrap(40, RandomSource(7, (3,)))
    b = bootstrap(40, RandomSource(7, (3,)))
    np.testing.assert_array_equal(a.weights, b.weights)
    c = bootstrap(40, RandomSource(7, (4,)))
    assert not np.array_equal(a.weights, c.weights)


def test_bootstrap_retries_until_oob_nonempty():
    # At n=2 the first draw often covers both rows; the retry must then move
    # to the next child stream rather than loop on the same one.
    found = None
    for seed in range(300):
        src = RandomSource(seed, (0,))
        first = src.child(0).generator().integers(0, 2, size=2)
        if first[0] != first[1]:
            found = src
            break
    assert found is not None
    sample = bootstrap(2, found)
    accepted = None
    for attempt in range(1, 64):
        draws = found.child(attempt).generator().integers(0, 2, size=2)
        if draws[0] == draws[1]:
            accepted = np.bincount(draws, minlength=2).astype(float)
            break
    assert accepted is not None  # the retry chain moved past attempt 0
    np.testing.assert_array_equal(sample.weights, accepted)
    assert sample.n_oob == 1


def test_bootstrap_single_row_exhausts_retries():
    with pytest.raises(RuntimeError, match="no out-of-bag rows"):
        bootstrap(1, RandomSource(0))
    with pytest.raises(ValueError, match="cannot bootstrap"):
        bootstrap(0, RandomSource(0))


def test_bootstrap_coverage_rough():
    fractions = [bootstrap(100, RandomSource(0, (i,))).n_itb / 100
                 for i in range(300)]
    assert abs(np.mean(fractions) - (1 - (1 - 0.01) ** 100)) < 0.03


def test_default_max_features():
    assert [default_max_features(d) for d in (1, 2, 4, 9, 10, 16)] == \
        [1, 1, 2, 3, 3, 4]


def test_subsample_features_contract():
    src = RandomSource(11, (5,))
    chosen = subsample_features(10, 4, src)
    assert chosen.shape == (4,)
    assert (np.diff(chosen) > 0).all()
    assert chosen.min() >= 0 and chosen.max() < 10
    np.testing.assert_array_equal(chosen, subsample_features(10, 4, src))
    np.testing.assert_array_equal(subsample_features(5, 5, src), np.arange(5))
    np.testing.assert_array_equal(subsample_features(5, 9, src), np.arange(5))
    with pytest.raises(ValueError, match="max_features"):
        subsample_features(5, 0, src)


def test_source_key_identity():
    base = RandomSource(3)
    assert base.child(1, 2).stream == (1, 2)
    assert base.child(1).child(2).stream == (1, 2)
    x = base.child(0, 5).generator().random(4)
    y = RandomSource(3, (0, 5)).generator().random(4)
    np.testing.assert_array_equal(x, y)

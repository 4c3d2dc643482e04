"""Bootstrap row sampling and per-node feature subsampling with splittable seeding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Purpose tags keep derived streams for different uses disjoint.
TAG_BOOTSTRAP = 0
TAG_FEATURES = 1

_MAX_BOOTSTRAP_RETRIES = 64


@dataclass(frozen=True)
class RandomSource:
    """Deterministic, splittable source of randomness.

    A source is identified by a base seed plus a stream key, a tuple of
    integers such as (tree index, purpose tag, node index).  Two sources with
    equal keys yield identical draws no matter where or in which order they
    run, which makes training reproducible under any worker count.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def child(self, *ids: int) -> "RandomSource":
        return RandomSource(self.seed, self.stream + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class BootstrapSample:
    """Row multiplicities of one bootstrap draw.

    ``weights[i]`` counts how many times row i was drawn.  Rows with positive
    weight are in-the-bag (itb) and feed tree growth; the others are
    out-of-bag (oob) and feed the aggregation weights.
    """

    weights: np.ndarray
    itb_indices: np.ndarray
    oob_indices: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.weights.shape[0]

    @property
    def n_itb(self) -> int:
        return self.itb_indices.shape[0]

    @property
    def n_oob(self) -> int:
        return self.oob_indices.shape[0]


def bootstrap(n: int, source: RandomSource) -> BootstrapSample:
    """Draw n rows uniformly with replacement from range(n).

    Draws whose oob side comes up empty are re-drawn with the next stream
    counter; after 64 failures this raises, since aggregation cannot be
    trained without held-out rows.
    """
    if n < 1:
        raise ValueError(f"cannot bootstrap from {n} rows")
    for attempt in range(_MAX_BOOTSTRAP_RETRIES):
        gen = source.child(attempt).generator()
        draws = gen.integers(0, n, size=n)
        weights = np.bincount(draws, minlength=n).astype(np.float64)
        oob = np.flatnonzero(weights == 0.0)
        if oob.size > 0:
            return BootstrapSample(
                weights=weights,
                itb_indices=np.flatnonzero(weights),
                oob_indices=oob,
            )
    raise RuntimeError(
        f"bootstrap of {n} rows produced no out-of-bag rows in "
        f"{_MAX_BOOTSTRAP_RETRIES} attempts"
    )


def default_max_features(n_features: int) -> int:
    return max(1, int(np.sqrt(n_features)))


def subsample_features(n_features: int, max_features: int, source: RandomSource) -> np.ndarray:
    """Pick max_features distinct feature ids, sorted ascending.

    When max_features covers all features the full set is returned without
    consuming randomness.
    """
    if n_features < 1:
        raise ValueError("need at least one feature")
    if max_features < 1:
        raise ValueError(f"max_features must be >= 1, got {max_features}")
    if max_features >= n_features:
        return np.arange(n_features, dtype=np.int64)
    gen = source.generator()
    chosen = gen.choice(n_features, size=max_features, replace=False)
    return np.sort(chosen.astype(np.int64))

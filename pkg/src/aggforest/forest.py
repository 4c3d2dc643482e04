"""Training and prediction for forests of aggregated trees."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .aggregation import (
    AggregationState,
    build_state,
    predict_aggregated_batch,
    predict_leaf_only_batch,
)
from .binning import BinMapper, BinnedMatrix, fit_bins, transform
from .sampling import TAG_BOOTSTRAP, RandomSource, bootstrap
from .splits import CLASSIFICATION_CRITERIA, REGRESSION_CRITERIA
from .tree import Tree, grow_tree

TASKS = ("classification", "regression")
MULTICLASS_STRATEGIES = ("heuristic", "one_vs_rest")


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run besides the data itself."""

    task: str = "classification"
    n_trees: int = 10
    max_bins: int = 256
    max_features: int | None = None     # None: floor(sqrt(d)), at least 1
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    impurity_threshold: float = 0.0
    max_depth: int | None = None
    temperature: float | None = None    # None: 1.0, or 1/(8 B^2) for regression
    dirichlet: float = 0.5
    criterion: str | None = None        # None: gini / variance by task
    aggregation: bool = True
    multiclass: str = "heuristic"
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_bins < 2:
            raise ValueError(f"max_bins must be >= 2, got {self.max_bins}")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1 when given")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.impurity_threshold < 0:
            raise ValueError("impurity_threshold must be >= 0")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 when given")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError("temperature must be >= 0 when given")
        if self.dirichlet <= 0:
            raise ValueError("dirichlet must be positive")
        if self.criterion is not None:
            allowed = (CLASSIFICATION_CRITERIA if self.task == "classification"
                       else REGRESSION_CRITERIA)
            if self.criterion not in allowed:
                raise ValueError(
                    f"criterion {self.criterion!r} is not valid for {self.task}")
        if self.multiclass not in MULTICLASS_STRATEGIES:
            raise ValueError(
                f"multiclass must be one of {MULTICLASS_STRATEGIES}")


@dataclass
class FittedTree:
    """One grown tree plus its aggregation state.

    ``index`` is the tree's position within its sequence, so predicting with
    the first k trees of a forest equals training with n_trees=k outright.
    ``class_id`` is the positive class under one-versus-rest, -1 otherwise.
    """

    index: int
    class_id: int
    tree: Tree
    state: AggregationState
    oob_loss_mean: float


@dataclass
class Forest:
    config: TrainConfig
    mapper: BinMapper
    trees: list[FittedTree]
    temperature_: float
    classes_: np.ndarray | None = None
    y_min_: float = 0.0
    y_max_: float = 0.0
    feature_names: list[str] | None = None

    @property
    def n_classes(self) -> int:
        return 0 if self.classes_ is None else self.classes_.shape[0]

    def _binned(self, X) -> BinnedMatrix:
        return transform(X, self.mapper)

    def _bundle_predictions(self, bundle: FittedTree, entries) -> np.ndarray:
        if self.config.aggregation:
            return predict_aggregated_batch(bundle.tree, bundle.state, entries)
        return predict_leaf_only_batch(bundle.tree, bundle.state.forecasts,
                                       entries)

    def _selected(self, max_trees: int | None) -> list[FittedTree]:
        if max_trees is None:
            return self.trees
        if max_trees < 1:
            raise ValueError("max_trees must be >= 1")
        return [b for b in self.trees if b.index < max_trees]

    def predict_proba(self, X, max_trees: int | None = None) -> np.ndarray:
        """Class probabilities, columns ordered like ``classes_``."""
        if self.config.task != "classification":
            raise ValueError("predict_proba requires a classification forest")
        entries = self._binned(X).entries
        bundles = self._selected(max_trees)
        K = self.n_classes
        if self.config.multiclass == "one_vs_rest" and bundles[0].class_id >= 0:
            cols = np.zeros((entries.shape[0], K), dtype=np.float64)
            counts = np.zeros(K, dtype=np.int64)
            for b in bundles:
                cols[:, b.class_id] += self._bundle_predictions(b, entries)[:, 1]
                counts[b.class_id] += 1
            cols /= counts
            return cols / cols.sum(axis=1, keepdims=True)
        acc = np.zeros((entries.shape[0], K), dtype=np.float64)
        for b in bundles:
            acc += self._bundle_predictions(b, entries)
        return acc / len(bundles)

    def predict(self, X, max_trees: int | None = None) -> np.ndarray:
        """Class labels (ties go to the lowest class index) or clipped means."""
        if self.config.task == "classification":
            proba = self.predict_proba(X, max_trees=max_trees)
            return self.classes_[np.argmax(proba, axis=1)]
        entries = self._binned(X).entries
        bundles = self._selected(max_trees)
        acc = np.zeros(entries.shape[0], dtype=np.float64)
        for b in bundles:
            acc += self._bundle_predictions(b, entries)
        acc /= len(bundles)
        return np.clip(acc, self.y_min_, self.y_max_)

    def oob_loss_summary(self) -> tuple[float, float]:
        """Mean and standard deviation over trees of the per-tree mean oob loss."""
        vals = np.array([b.oob_loss_mean for b in self.trees])
        return float(vals.mean()), float(vals.std())


def _resolve_temperature(config: TrainConfig, y: np.ndarray) -> float:
    if config.temperature is not None:
        return config.temperature
    if config.task == "classification":
        return 1.0
    bound = float(np.abs(y).max())
    if bound == 0.0:
        return 1.0
    return 1.0 / (8.0 * bound * bound)


def _fit_single(binned: BinnedMatrix, y_enc: np.ndarray, config: TrainConfig,
                temperature: float, n_classes: int, index: int,
                class_id: int) -> FittedTree:
    if class_id >= 0:
        labels = (y_enc == class_id).astype(np.int64)
        k = 2
        source = RandomSource(config.seed).child(class_id, index)
    else:
        labels = y_enc
        k = n_classes
        source = RandomSource(config.seed).child(index)
    sample = bootstrap(binned.n_rows, source.child(TAG_BOOTSTRAP))
    tree = grow_tree(binned, labels, sample, config, source, n_classes=k)
    oob_rows = sample.oob_indices if config.aggregation else None
    state = build_state(tree, binned.entries, labels, oob_rows, temperature,
                        config.dirichlet)
    if config.aggregation:
        preds = predict_aggregated_batch(tree, state, binned.entries[sample.oob_indices])
    else:
        preds = predict_leaf_only_batch(tree, state.forecasts,
                                        binned.entries[sample.oob_indices])
    y_oob = labels[sample.oob_indices]
    if k > 0:
        losses = -np.log(preds[np.arange(y_oob.shape[0]), y_oob])
    else:
        losses = (preds - y_oob) ** 2
    return FittedTree(index, class_id, tree, state, float(losses.mean()))


_POOL_PAYLOAD = None


def _pool_init(payload):
    global _POOL_PAYLOAD
    _POOL_PAYLOAD = payload


def _pool_task(task):
    index, class_id = task
    return _fit_single(*_POOL_PAYLOAD, index, class_id)


def fit(X, y, kinds, config: TrainConfig, n_jobs: int = 1,
        feature_names: list[str] | None = None) -> Forest:
    """Train a forest.

    The result is a deterministic function of (X, y, kinds, config): trees are
    seeded by (config.seed, tree index), so the worker count changes wall time
    only, never the model.  With n_jobs=1 everything runs in-process.
    """
    y = np.asarray(y)
    classes = None
    if config.task == "classification":
        classes, y_enc = np.unique(y, return_inverse=True)
        y_enc = y_enc.astype(np.int64)
        if classes.shape[0] < 2:
            raise ValueError("classification needs at least two classes")
        n_classes = classes.shape[0]
    else:
        y_enc = y.astype(np.float64)
        if not np.isfinite(y_enc).all():
            raise ValueError("regression targets must be finite")
        n_classes = 0
    temperature = _resolve_temperature(config, y_enc)

    mapper = fit_bins(X, kinds, config.max_bins)
    binned = transform(X, mapper)
    if binned.n_rows != y_enc.shape[0]:
        raise ValueError(
            f"got {binned.n_rows} rows of features but {y_enc.shape[0]} labels")

    one_vs_rest = (config.task == "classification"
                   and config.multiclass == "one_vs_rest")
    if one_vs_rest:
        tasks = [(m, k) for k in range(n_classes) for m in range(config.n_trees)]
    else:
        tasks = [(m, -1) for m in range(config.n_trees)]

    if n_jobs == 1 or len(tasks) == 1:
        bundles = [_fit_single(binned, y_enc, config, temperature, n_classes,
                               m, c) for m, c in tasks]
    else:
        payload = (binned, y_enc, config, temperature, n_classes)
        with ProcessPoolExecutor(max_workers=n_jobs, initializer=_pool_init,
                                 initargs=(payload,)) as pool:
            bundles = list(pool.map(_pool_task, tasks))

    forest = Forest(config=config, mapper=mapper, trees=bundles,
                    temperature_=temperature, classes_=classes,
                    feature_names=list(feature_names) if feature_names else None)
    if config.task == "regression":
        forest.y_min_ = float(y_enc.min())
        forest.y_max_ = float(y_enc.max())
    return forest

"""Exponentially weighted aggregation over all prunings of a grown tree.

Every subtree sharing the full tree's root is a candidate predictor.  The
weighted average over all of them, with prior 2**(-complexity) and weights
exp(-temperature * oob loss), collapses to one upward sweep per query thanks
to a per-node recursion over log-domain weights, so nothing is enumerated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tree import Tree

LOG2 = math.log(2.0)

LOG_LOSS = "log"
SQUARED_LOSS = "squared"


@dataclass
class AggregationState:
    """Per-node quantities needed to predict with aggregation.

    ``oob_loss`` holds each node's total loss over the out-of-bag rows it
    contains, ``log_agg_weight`` the log-domain recursive weight.  Both are
    None for a state built without aggregation (leaf-only prediction).
    """

    loss: str
    temperature: float
    dirichlet: float
    forecasts: np.ndarray
    oob_loss: np.ndarray | None
    log_agg_weight: np.ndarray | None


def node_forecast(stats, task: str, dirichlet: float = 0.5):
    """Forecast of a single node from its itb label statistics.

    Classification returns the smoothed class frequencies
    (count_k + dirichlet) / (total + dirichlet * K), strictly positive and
    summing to one.  Regression returns the weighted label mean.
    """
    stats = np.asarray(stats, dtype=np.float64)
    if task == "classification":
        if dirichlet <= 0:
            raise ValueError(f"dirichlet must be positive, got {dirichlet}")
        total = stats.sum()
        return (stats + dirichlet) / (total + dirichlet * stats.shape[0])
    if task == "regression":
        if stats[0] <= 0:
            raise ValueError("forecast of an empty node is undefined")
        return float(stats[1] / stats[0])
    raise ValueError(f"unknown task {task!r}")


def _forecast_all(tree: Tree, dirichlet: float) -> np.ndarray:
    if tree.task == "classification":
        if dirichlet <= 0:
            raise ValueError(f"dirichlet must be positive, got {dirichlet}")
        totals = tree.stats.sum(axis=1, keepdims=True)
        return (tree.stats + dirichlet) / (totals + dirichlet * tree.n_classes)
    return tree.stats[:, 1] / tree.stats[:, 0]


def node_oob_loss(forecast, y_values, loss: str) -> float:
    """Total loss of one node's forecast over its oob labels."""
    y = np.asarray(y_values)
    if loss == LOG_LOSS:
        forecast = np.asarray(forecast, dtype=np.float64)
        return float(-np.log(forecast[y.astype(np.int64)]).sum())
    if loss == SQUARED_LOSS:
        return float(((float(forecast) - y.astype(np.float64)) ** 2).sum())
    raise ValueError(f"unknown loss {loss!r}")


def accumulate_oob_losses(tree: Tree, forecasts: np.ndarray, entries: np.ndarray,
                          oob_rows: np.ndarray, labels: np.ndarray,
                          loss: str) -> np.ndarray:
    """Route every oob row from the root to its leaf, adding the loss of each
    visited node's forecast to that node's total."""
    classification = loss == LOG_LOSS
    L = np.zeros(tree.n_nodes, dtype=np.float64)
    if oob_rows.shape[0] == 0:
        return L
    y = labels[oob_rows]
    cur = np.zeros(oob_rows.shape[0], dtype=np.int64)
    act = np.arange(oob_rows.shape[0])
    while act.size:
        nodes = cur[act]
        if classification:
            contrib = -np.log(forecasts[nodes, y[act]])
        else:
            contrib = (forecasts[nodes] - y[act]) ** 2
        np.add.at(L, nodes, contrib)
        internal = tree.feature[nodes] >= 0
        act = act[internal]
        if not act.size:
            break
        ids = cur[act]
        codes = entries[oob_rows[act], tree.feature[ids]]
        left = tree._goes_left(ids, codes)
        cur[act] = np.where(left, tree.left_child[ids], tree.right_child[ids])
    return L


def compute_log_agg_weights(tree: Tree, oob_loss: np.ndarray,
                            temperature: float) -> np.ndarray:
    """Log-domain recursive aggregation weight of every node.

    One reverse pass suffices because children sit after their parent in the
    node array.  Leaves carry -temperature * loss; an internal node averages
    its own exponential weight with the product of its children's, all in the
    log domain so huge losses cannot overflow.
    """
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    neg = (-temperature * np.asarray(oob_loss, dtype=np.float64)).tolist()
    out = list(neg)
    feat = tree.feature.tolist()
    lc = tree.left_child.tolist()
    rc = tree.right_child.tolist()
    log1p, exp = math.log1p, math.exp
    for v in range(tree.n_nodes - 1, -1, -1):
        if feat[v] >= 0:
            a = neg[v]
            b = out[lc[v]] + out[rc[v]]
            m = a if a >= b else b
            out[v] = m + log1p(exp(-abs(a - b))) - LOG2
    return np.asarray(out, dtype=np.float64)


def build_state(tree: Tree, entries: np.ndarray, labels, oob_rows,
                temperature: float, dirichlet: float = 0.5) -> AggregationState:
    """Compute forecasts, oob losses, and log weights for one grown tree.

    Pass oob_rows=None to build a leaf-only state (no aggregation arrays),
    which is what prediction with aggregation switched off uses.
    """
    loss = LOG_LOSS if tree.task == "classification" else SQUARED_LOSS
    forecasts = _forecast_all(tree, dirichlet)
    if oob_rows is None:
        return AggregationState(loss, temperature, dirichlet, forecasts, None, None)
    labels = np.asarray(labels)
    if tree.task == "classification":
        labels = labels.astype(np.int64, copy=False)
    else:
        labels = labels.astype(np.float64, copy=False)
    L = accumulate_oob_losses(tree, forecasts, entries, np.asarray(oob_rows),
                              labels, loss)
    log_w = compute_log_agg_weights(tree, L, temperature)
    return AggregationState(loss, temperature, dirichlet, forecasts, L, log_w)


def mix_coefficients(state: AggregationState) -> np.ndarray:
    """Per-node weight put on the node's own forecast during the up sweep.

    Always within [0, 1]: the recursive weight of a node is at least half its
    own exponential weight.
    """
    mix = 0.5 * np.exp(-state.temperature * state.oob_loss - state.log_agg_weight)
    return np.minimum(mix, 1.0)


def predict_aggregated(tree: Tree, state: AggregationState, x,
                       count_visits: bool = False):
    """Aggregated prediction for a single binned row.

    Descends to the leaf, then folds forecasts back up: at each ancestor the
    result is a convex combination of the ancestor's own forecast and the
    answer from below.  Touches 2 * path length - 1 node records.
    """
    if state.log_agg_weight is None:
        raise ValueError("state was built without aggregation arrays")
    path = tree.path(np.asarray(x))
    visits = path.shape[0]
    f = np.array(state.forecasts[path[-1]], dtype=np.float64, copy=True)
    eta = state.temperature
    for v in path[-2::-1]:
        visits += 1
        mix = 0.5 * math.exp(-eta * state.oob_loss[v] - state.log_agg_weight[v])
        mix = min(mix, 1.0)
        f = mix * state.forecasts[v] + (1.0 - mix) * f
    if tree.task == "classification":
        s = f.sum()
        if abs(s - 1.0) > 1e-12:
            f = f / s
    else:
        f = float(f)
    return (f, visits) if count_visits else f


def predict_aggregated_batch(tree: Tree, state: AggregationState,
                             entries: np.ndarray) -> np.ndarray:
    """Aggregated predictions for every row of a binned matrix."""
    if state.log_agg_weight is None:
        raise ValueError("state was built without aggregation arrays")
    classification = tree.task == "classification"
    mix_all = mix_coefficients(state)
    leaf = tree.route(entries)
    f = state.forecasts[leaf].copy()
    cur = leaf
    act = np.flatnonzero(cur != 0)
    while act.size:
        p = tree.parent[cur[act]].astype(np.int64)
        mix = mix_all[p]
        if classification:
            f[act] = mix[:, None] * state.forecasts[p] + (1.0 - mix[:, None]) * f[act]
        else:
            f[act] = mix * state.forecasts[p] + (1.0 - mix) * f[act]
        cur[act] = p
        act = act[p != 0]
    if classification:
        s = f.sum(axis=1)
        bad = np.abs(s - 1.0) > 1e-12
        if bad.any():
            f[bad] /= s[bad, None]
    return f


def predict_leaf_only(tree: Tree, x, dirichlet: float = 0.5):
    """Forecast of the leaf holding one binned row, no aggregation.

    This is the plain random forest prediction path, kept as the ablation
    baseline.
    """
    leaf = int(tree.path(np.asarray(x))[-1])
    return node_forecast(tree.stats[leaf], tree.task, dirichlet)


def predict_leaf_only_batch(tree: Tree, forecasts: np.ndarray,
                            entries: np.ndarray) -> np.ndarray:
    return forecasts[tree.route(entries)]

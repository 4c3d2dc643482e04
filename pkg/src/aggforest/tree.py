"""Flat binary trees grown depth-first on binned features."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .binning import BinnedMatrix, FeatureKind
from .sampling import (
    TAG_FEATURES,
    BootstrapSample,
    RandomSource,
    default_max_features,
    subsample_features,
)
from .splits import (
    CLASSIFICATION_CRITERIA,
    REGRESSION_CRITERIA,
    Histogram,
    Split,
    SplitConstraints,
    compute_histogram,
    find_best_split,
    impurity,
    sibling_histogram,
)

NO_NODE = -1

# Parents hand finished histograms to their children only when every feature
# is sampled at every node (the subsets then necessarily coincide) and the
# feature count is small enough that stashing tables on the stack stays cheap.
_PASS_HIST_MAX_FEATURES = 8


@dataclass
class NodeRecord:
    """One node of a grown tree, assembled for inspection."""

    index: int
    parent: int
    left_child: int
    right_child: int
    depth: int
    split: Split | None
    itb_count: int
    itb_weight: float
    oob_count: int
    stats: np.ndarray
    oob_loss: float | None = None
    log_agg_weight: float | None = None


@dataclass
class Tree:
    """A grown tree as parallel per-node arrays.

    Children always sit at larger indexes than their parent (the root is
    node 0), so a single reverse pass visits children before parents.
    Categorical split masks live in the shared ``masks`` pool, indexed by
    ``mask_id``; ``threshold`` is meaningful only for continuous splits.
    """

    task: str
    n_classes: int
    feature: np.ndarray
    threshold: np.ndarray
    missing_left: np.ndarray
    mask_id: np.ndarray
    masks: np.ndarray
    left_child: np.ndarray
    right_child: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    gain: np.ndarray
    itb_count: np.ndarray
    itb_weight: np.ndarray
    oob_count: np.ndarray
    stats: np.ndarray
    feature_n_bins: np.ndarray
    feature_missing_bin: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def max_node_depth(self) -> int:
        return int(self.depth.max())

    def split_of(self, index: int) -> Split | None:
        j = int(self.feature[index])
        if j < 0:
            return None
        mid = int(self.mask_id[index])
        mask = None
        if mid >= 0:
            mask = self.masks[mid, : int(self.feature_n_bins[j])].copy()
        return Split(
            feature=j,
            is_categorical=mid >= 0,
            bin_threshold=int(self.threshold[index]),
            missing_goes_left=bool(self.missing_left[index]),
            left_mask=mask,
            gain=float(self.gain[index]),
        )

    def node(self, index: int, state=None) -> NodeRecord:
        oob_loss = log_w = None
        if state is not None and state.oob_loss is not None:
            oob_loss = float(state.oob_loss[index])
            log_w = float(state.log_agg_weight[index])
        return NodeRecord(
            index=index,
            parent=int(self.parent[index]),
            left_child=int(self.left_child[index]),
            right_child=int(self.right_child[index]),
            depth=int(self.depth[index]),
            split=self.split_of(index),
            itb_count=int(self.itb_count[index]),
            itb_weight=float(self.itb_weight[index]),
            oob_count=int(self.oob_count[index]),
            stats=self.stats[index],
            oob_loss=oob_loss,
            log_agg_weight=log_w,
        )

    def _goes_left(self, nodes: np.ndarray, codes: np.ndarray) -> np.ndarray:
        """Vectorized routing decision for rows standing at internal nodes."""
        j = self.feature[nodes]
        codes = codes.astype(np.int64, copy=False)
        left = codes <= self.threshold[nodes]
        mb = self.feature_missing_bin[j]
        is_missing = (mb >= 0) & (codes == mb)
        if is_missing.any():
            left = np.where(is_missing, self.missing_left[nodes], left)
        mid = self.mask_id[nodes]
        cat = mid >= 0
        if cat.any():
            left[cat] = self.masks[mid[cat], codes[cat]]
        return left

    def route(self, entries: np.ndarray) -> np.ndarray:
        """Leaf index for every row of a binned matrix."""
        n = entries.shape[0]
        cur = np.zeros(n, dtype=np.int64)
        active = np.flatnonzero(self.feature[cur] >= 0)
        while active.size:
            ids = cur[active]
            codes = entries[active, self.feature[ids]]
            left = self._goes_left(ids, codes)
            nxt = np.where(left, self.left_child[ids], self.right_child[ids])
            cur[active] = nxt
            active = active[self.feature[nxt] >= 0]
        return cur

    def path(self, entry_row: np.ndarray) -> np.ndarray:
        """Node ids from the root down to the leaf holding one binned row."""
        v = 0
        out = [0]
        while self.feature[v] >= 0:
            j = int(self.feature[v])
            code = int(entry_row[j])
            mid = int(self.mask_id[v])
            if mid >= 0:
                left = bool(self.masks[mid, code])
            elif code == self.feature_missing_bin[j]:
                left = bool(self.missing_left[v])
            else:
                left = code <= int(self.threshold[v])
            v = int(self.left_child[v] if left else self.right_child[v])
            out.append(v)
        return np.asarray(out, dtype=np.int64)


def _resolve_criterion(config) -> str:
    criterion = getattr(config, "criterion", None)
    if criterion is None:
        return "gini" if config.task == "classification" else "variance"
    return criterion


def _node_stats(abs_rows, w_rows, labels, n_classes) -> np.ndarray:
    if n_classes > 0:
        return np.bincount(labels[abs_rows], weights=w_rows, minlength=n_classes)
    yr = labels[abs_rows]
    wy = w_rows * yr
    return np.array([w_rows.sum(), wy.sum(), (wy * yr).sum()])


def _left_bin_selector(split: Split, n_bins: int, missing_bin: int) -> np.ndarray:
    """Boolean bin membership of the left child."""
    if split.is_categorical:
        return split.left_mask
    sel = np.arange(n_bins) <= split.bin_threshold
    if missing_bin >= 0:
        sel[missing_bin] = split.missing_goes_left
    return sel


def grow_tree(binned: BinnedMatrix, labels, sample: BootstrapSample, config,
              source: RandomSource, *, n_classes: int = 0) -> Tree:
    """Grow one tree depth-first on a bootstrap sample.

    ``config`` supplies task, criterion, sizes and the aggregation switch
    (see TrainConfig).  With aggregation on, minimum-size rules apply to the
    itb weight and the oob count of every node, which guarantees each node
    holds at least one sample of either kind.  With aggregation off only itb
    weights are constrained, matching a plain random forest.

    Labels must be encoded class ids when n_classes > 0, float targets
    otherwise.
    """
    classification = n_classes > 0
    if classification != (config.task == "classification"):
        raise ValueError("n_classes and config.task disagree")
    criterion = _resolve_criterion(config)
    allowed = CLASSIFICATION_CRITERIA if classification else REGRESSION_CRITERIA
    if criterion not in allowed:
        raise ValueError(f"criterion {criterion!r} is not valid for {config.task}")
    labels = np.asarray(labels)
    if classification:
        labels = labels.astype(np.int64, copy=False)
    else:
        labels = labels.astype(np.float64, copy=False)

    entries = binned.entries
    d = binned.n_cols
    use_oob = bool(config.aggregation)
    max_features = config.max_features or default_max_features(d)
    max_depth = config.max_depth
    eps = config.impurity_threshold
    min_split_w = float(config.min_samples_split)
    min_split_oob = int(config.min_samples_split)
    constraints = SplitConstraints(
        min_leaf_weight=float(config.min_samples_leaf),
        min_leaf_oob=int(config.min_samples_leaf) if use_oob else 0,
    )
    pass_hist = max_features >= d and d <= _PASS_HIST_MAX_FEATURES
    all_features = np.arange(d, dtype=np.int64)

    itb = sample.itb_indices
    w_itb = sample.weights[itb]
    oob = sample.oob_indices if use_oob else np.empty(0, dtype=np.int64)
    itb_perm = np.arange(itb.shape[0])
    oob_perm = np.arange(oob.shape[0])

    f_feature, f_threshold, f_mleft, f_maskid = [], [], [], []
    f_left, f_right, f_parent, f_depth, f_gain = [], [], [], [], []
    f_itbc, f_itbw, f_oobc, f_stats = [], [], [], []
    mask_pool: list[np.ndarray] = []
    mask_bins = int(binned.n_bins.max())

    # (parent, is_left, itb lo, itb hi, oob lo, oob hi, depth, stats, hist, oob bins)
    stack = [(NO_NODE, True, 0, itb.shape[0], 0, oob.shape[0], 0, None, None, None)]
    while stack:
        parent_id, is_left, il, ih, ol, oh, depth, stats, hist, oob_bins = stack.pop()
        node_id = len(f_feature)
        if parent_id >= 0:
            (f_left if is_left else f_right)[parent_id] = node_id

        pos = itb_perm[il:ih]
        abs_rows = itb[pos]
        w_rows = w_itb[pos]
        if stats is None:
            stats = _node_stats(abs_rows, w_rows, labels, n_classes)
        w_node = float(stats.sum() if classification else stats[0])
        n_oob_node = oh - ol
        imp = impurity(stats, criterion)

        f_feature.append(NO_NODE)
        f_threshold.append(-2)
        f_mleft.append(False)
        f_maskid.append(NO_NODE)
        f_left.append(NO_NODE)
        f_right.append(NO_NODE)
        f_parent.append(parent_id)
        f_depth.append(depth)
        f_gain.append(np.nan)
        f_itbc.append(pos.shape[0])
        f_itbw.append(w_node)
        f_oobc.append(n_oob_node)
        f_stats.append(stats)

        can_split = True
        if max_depth is not None and depth >= max_depth:
            can_split = False
        elif w_node < min_split_w:
            can_split = False
        elif use_oob and n_oob_node < min_split_oob:
            can_split = False
            if node_id == 0:
                warnings.warn(
                    f"root has only {n_oob_node} out-of-bag rows, fewer than "
                    f"min_samples_split={min_split_oob}; the tree is a single leaf",
                    stacklevel=2,
                )
        elif imp <= eps:
            can_split = False
        if not can_split:
            continue

        if hist is None:
            if max_features >= d:
                feats = all_features
            else:
                feats = subsample_features(
                    d, max_features, source.child(TAG_FEATURES, node_id))
            hist = compute_histogram(abs_rows, w_rows, feats, binned, labels,
                                     n_classes)
        abs_oob = oob[oob_perm[ol:oh]]
        if use_oob and oob_bins is None:
            oob_bins = [
                np.bincount(entries[abs_oob, j], minlength=int(binned.n_bins[j]))
                for j in hist.features
            ]
        split = find_best_split(hist, binned, criterion, constraints,
                                oob_counts=oob_bins, n_classes=n_classes)
        if split is None:
            continue

        j = split.feature
        mb = int(binned.missing_bin[j])
        b_j = int(binned.n_bins[j])
        f_feature[node_id] = j
        f_gain[node_id] = split.gain
        if split.is_categorical:
            padded = np.zeros(mask_bins, dtype=bool)
            padded[:b_j] = split.left_mask
            f_maskid[node_id] = len(mask_pool)
            mask_pool.append(padded)
        else:
            f_threshold[node_id] = split.bin_threshold
            f_mleft[node_id] = split.missing_goes_left

        sel = _left_bin_selector(split, b_j, mb)
        codes = entries[abs_rows, j]
        left = sel[codes]
        nl = int(left.sum())
        seg = itb_perm[il:ih]
        itb_perm[il:ih] = np.concatenate((seg[left], seg[~left]))

        nol = 0
        if use_oob:
            left_o = sel[entries[abs_oob, j]]
            nol = int(left_o.sum())
            oseg = oob_perm[ol:oh]
            oob_perm[ol:oh] = np.concatenate((oseg[left_o], oseg[~left_o]))

        # Child stats fall out of the split feature's own table.
        table = hist.tables[int(np.searchsorted(hist.features, j))]
        stats_l = table[sel[:table.shape[0]]].sum(axis=0)
        stats_r = stats - stats_l

        hist_l = hist_r = None
        oob_bins_l = oob_bins_r = None
        if pass_hist:
            nr = pos.shape[0] - nl
            small_rows = itb[itb_perm[il:il + nl]] if nl <= nr else itb[itb_perm[il + nl:ih]]
            small_w = sample.weights[small_rows]
            small_hist = compute_histogram(small_rows, small_w, hist.features,
                                           binned, labels, n_classes)
            other = sibling_histogram(hist, small_hist, classification)
            hist_l, hist_r = (small_hist, other) if nl <= nr else (other, small_hist)
            if use_oob:
                oob_rows_l = oob[oob_perm[ol:ol + nol]]
                oob_bins_l = [
                    np.bincount(entries[oob_rows_l, f], minlength=int(binned.n_bins[f]))
                    for f in hist.features
                ]
                oob_bins_r = [p - l for p, l in zip(oob_bins, oob_bins_l)]

        stack.append((node_id, False, il + nl, ih, ol + nol, oh, depth + 1,
                      stats_r, hist_r, oob_bins_r))
        stack.append((node_id, True, il, il + nl, ol, ol + nol, depth + 1,
                      stats_l, hist_l, oob_bins_l))

    n_nodes = len(f_feature)
    masks = (np.vstack(mask_pool) if mask_pool
             else np.zeros((0, mask_bins), dtype=bool))
    tree = Tree(
        task=config.task,
        n_classes=n_classes,
        feature=np.asarray(f_feature, dtype=np.int32),
        threshold=np.asarray(f_threshold, dtype=np.int32),
        missing_left=np.asarray(f_mleft, dtype=bool),
        mask_id=np.asarray(f_maskid, dtype=np.int32),
        masks=masks,
        left_child=np.asarray(f_left, dtype=np.int32),
        right_child=np.asarray(f_right, dtype=np.int32),
        parent=np.asarray(f_parent, dtype=np.int32),
        depth=np.asarray(f_depth, dtype=np.int32),
        gain=np.asarray(f_gain, dtype=np.float64),
        itb_count=np.asarray(f_itbc, dtype=np.int64),
        itb_weight=np.asarray(f_itbw, dtype=np.float64),
        oob_count=np.asarray(f_oobc, dtype=np.int64),
        stats=np.vstack(f_stats),
        feature_n_bins=binned.n_bins.copy(),
        feature_missing_bin=binned.missing_bin.copy(),
    )
    if (tree.itb_count < 1).any():
        raise RuntimeError("grown tree has a node without itb rows")
    if use_oob and (tree.oob_count < 1).any():
        raise RuntimeError("grown tree has a node without oob rows")
    return tree

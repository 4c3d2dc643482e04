"""Histogram construction and best-split search over binned features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .binning import BinnedMatrix, FeatureKind

CLASSIFICATION_CRITERIA = ("gini", "entropy")
REGRESSION_CRITERIA = ("variance",)


@dataclass
class Histogram:
    """Per-feature label statistics of one node's in-the-bag rows.

    ``tables[i]`` has one row per bin of feature ``features[i]``.  For
    classification the columns are bootstrap-weighted class counts; for
    regression they are (weight, weighted sum, weighted sum of squares).
    """

    features: np.ndarray
    tables: list


@dataclass(frozen=True)
class SplitConstraints:
    """Minimum child sizes a candidate split must respect."""

    min_leaf_weight: float = 1.0   # itb bootstrap weight per child
    min_leaf_oob: int = 0          # oob row count per child, 0 disables


@dataclass(frozen=True)
class Split:
    """A binary split of a node's bins.

    Continuous: plain bins <= bin_threshold go left and missing values follow
    missing_goes_left.  A threshold of -1 (legal only with
    missing_goes_left=True) sends only the missing bin left.  Categorical:
    left_mask[b] says whether bin b goes left; the missing bin, when the
    feature has one, is covered by the mask like any other bin.
    """

    feature: int
    is_categorical: bool
    bin_threshold: int
    missing_goes_left: bool
    left_mask: np.ndarray | None
    gain: float


def _stats_weights(table: np.ndarray, classification: bool) -> np.ndarray:
    return table.sum(axis=1) if classification else table[:, 0]


def compute_histogram(rows, weights, features, binned: BinnedMatrix, labels,
                      n_classes: int = 0) -> Histogram:
    """Tally bootstrap-weighted label statistics per (feature, bin).

    ``rows`` are absolute row ids of the node's itb rows, ``weights`` their
    bootstrap multiplicities, and ``labels`` the full label vector (encoded
    class ids, or float targets when n_classes == 0).
    """
    rows = np.asarray(rows)
    weights = np.asarray(weights, dtype=np.float64)
    features = np.asarray(features)
    y = labels[rows]
    entries = binned.entries
    tables = []
    if n_classes > 0:
        y = y.astype(np.int64, copy=False)
        for j in features:
            b = int(binned.n_bins[j])
            codes = entries[rows, j].astype(np.int64)
            flat = np.bincount(codes * n_classes + y, weights=weights,
                               minlength=b * n_classes)
            tables.append(flat.reshape(b, n_classes))
    else:
        y = y.astype(np.float64, copy=False)
        wy = weights * y
        wyy = wy * y
        for j in features:
            b = int(binned.n_bins[j])
            codes = entries[rows, j]
            table = np.empty((b, 3), dtype=np.float64)
            table[:, 0] = np.bincount(codes, weights=weights, minlength=b)
            table[:, 1] = np.bincount(codes, weights=wy, minlength=b)
            table[:, 2] = np.bincount(codes, weights=wyy, minlength=b)
            tables.append(table)
    return Histogram(features=features.astype(np.int64), tables=tables)


def sibling_histogram(parent: Histogram, child: Histogram,
                      classification: bool) -> Histogram:
    """Derive one child's histogram as parent minus the other child.

    Count channels must come out non-negative; a negative entry means the
    two histograms do not describe a parent and its child, which is an
    internal error worth failing loudly on.
    """
    if not np.array_equal(parent.features, child.features):
        raise ValueError("parent and child histograms cover different features")
    tables = []
    for pt, ct in zip(parent.tables, child.tables):
        diff = pt - ct
        counts = diff if classification else diff[:, 0]
        if (counts < 0).any():
            raise RuntimeError(
                "sibling histogram subtraction produced a negative count; "
                "histograms are inconsistent"
            )
        tables.append(diff)
    return Histogram(features=parent.features, tables=tables)


def impurity(stats: np.ndarray, criterion: str) -> float:
    """Mean impurity of a node from its label statistics.

    Classification stats are per-class weights; regression stats are
    (weight, weighted sum, weighted sum of squares).
    """
    stats = np.asarray(stats, dtype=np.float64)
    if criterion in ("gini", "entropy"):
        w = stats.sum()
        if w <= 0:
            raise ValueError("impurity of an empty node is undefined")
        p = stats / w
        if criterion == "gini":
            return float(1.0 - (p * p).sum())
        return float(-xlogy(p, p).sum())
    if criterion == "variance":
        w, s1, s2 = stats
        if w <= 0:
            raise ValueError("impurity of an empty node is undefined")
        return float(max(s2 / w - (s1 / w) ** 2, 0.0))
    raise ValueError(f"unknown impurity criterion {criterion!r}")


def _impw(stats2d: np.ndarray, w: np.ndarray, criterion: str) -> np.ndarray:
    """Weight-scaled impurity (w * mean impurity), vectorized over rows."""
    if criterion == "gini":
        return w - (stats2d * stats2d).sum(axis=1) / w
    if criterion == "entropy":
        return xlogy(w, w) - xlogy(stats2d, stats2d).sum(axis=1)
    # variance: columns are (w, sum, sum of squares)
    return stats2d[:, 2] - stats2d[:, 1] * stats2d[:, 1] / stats2d[:, 0]


class _Candidate:
    __slots__ = ("gain", "feature", "is_categorical", "threshold",
                 "missing_left", "mask")

    def __init__(self, gain, feature, is_categorical, threshold=-2,
                 missing_left=False, mask=None):
        self.gain = gain
        self.feature = feature
        self.is_categorical = is_categorical
        self.threshold = threshold
        self.missing_left = missing_left
        self.mask = mask


def _beats(a: _Candidate, b: _Candidate) -> bool:
    """Deterministic total order: gain, then feature id, then split identity."""
    if a.gain != b.gain:
        return a.gain > b.gain
    if a.feature != b.feature:
        return a.feature < b.feature
    if a.is_categorical:
        return a.mask.tobytes() < b.mask.tobytes()
    if a.threshold != b.threshold:
        return a.threshold < b.threshold
    return (not a.missing_left) and b.missing_left


def _scan_order(table, order, oob_left, oob_total, criterion, cons, parent_impw,
                w_total, classification):
    """Best prefix split with bins laid out in ``order``.

    ``oob_left[p]``, when not None, counts the oob rows routed left by the
    candidate that closes its left side after position p (this includes rows
    sitting in bins empty of itb rows, which never appear in ``order``).
    Returns (position, gain) of the best admissible prefix, or None.
    np.argmax keeps the first of tied gains, so the earliest boundary wins.
    """
    cum = np.cumsum(table[order], axis=0)
    total = cum[-1]
    cum = cum[:-1]
    wl = cum.sum(axis=1) if classification else cum[:, 0]
    wr = w_total - wl
    valid = (wl >= cons.min_leaf_weight) & (wr >= cons.min_leaf_weight)
    if cons.min_leaf_oob > 0:
        valid &= (oob_left >= cons.min_leaf_oob)
        valid &= (oob_total - oob_left >= cons.min_leaf_oob)
    if not valid.any():
        return None
    impw_l = _impw(cum, wl, criterion)
    impw_r = _impw(total - cum, wr, criterion)
    gains = np.where(valid, (parent_impw - impw_l - impw_r) / w_total, -np.inf)
    pos = int(np.argmax(gains))
    gain = float(gains[pos])
    if gain <= 0.0:
        return None
    return pos, gain


def _mask_from_bins(bins: np.ndarray, n_bins: int) -> np.ndarray:
    mask = np.zeros(n_bins, dtype=bool)
    mask[bins] = True
    return mask


def find_best_split(hist: Histogram, binned: BinnedMatrix, criterion: str,
                    constraints: SplitConstraints, oob_counts=None,
                    n_classes: int = 0) -> Split | None:
    """Search every sampled feature for the best admissible split.

    Continuous features are scanned left to right in bin order, and again
    with the missing bin moved to the front when the node holds missing
    values, so both missing directions compete.  Categorical features are
    scanned along bins sorted by class proportion (one scan per class beyond
    binary) or by bin mean for regression.  Ties break toward the lowest
    feature id, then the lowest threshold or lexicographically smallest bin
    mask.  Returns None when no split has positive gain and admissible
    children.
    """
    classification = n_classes > 0
    node_stats = hist.tables[0].sum(axis=0)
    w_total = float(node_stats.sum() if classification else node_stats[0])
    parent_impw = w_total * impurity(node_stats, criterion)
    check_oob = constraints.min_leaf_oob > 0
    best: _Candidate | None = None

    def consider(cand):
        nonlocal best
        if best is None or _beats(cand, best):
            best = cand

    for idx in range(hist.features.shape[0]):
        j = int(hist.features[idx])
        table = hist.tables[idx]
        w_bins = _stats_weights(table, classification)
        nonempty = np.flatnonzero(w_bins > 0)
        if nonempty.size < 2:
            continue
        oob_bins = oob_counts[idx] if check_oob else None
        oob_total = int(oob_bins.sum()) if check_oob else 0

        if binned.kinds[j] is FeatureKind.CATEGORICAL:
            # Bins empty of itb rows stay on the right side, so their oob
            # rows count toward the right child only.
            if classification:
                targets = [1] if n_classes == 2 else list(range(n_classes))
                props = [table[nonempty, k] / w_bins[nonempty] for k in targets]
            else:
                props = [table[nonempty, 1] / w_bins[nonempty]]
            for prop in props:
                order = nonempty[np.argsort(prop, kind="stable")]
                oob_left = np.cumsum(oob_bins[order])[:-1] if check_oob else None
                found = _scan_order(table, order, oob_left, oob_total,
                                    criterion, constraints, parent_impw,
                                    w_total, classification)
                if found is not None:
                    pos, gain = found
                    mask = _mask_from_bins(order[:pos + 1], int(binned.n_bins[j]))
                    consider(_Candidate(gain, j, True, mask=mask))
        else:
            missing_bin = int(binned.missing_bin[j])
            oob_below = np.cumsum(oob_bins) if check_oob else None
            # Natural ascending bin order; a missing bin is rightmost.
            found = _scan_order(table, nonempty,
                                oob_below[nonempty[:-1]] if check_oob else None,
                                oob_total, criterion, constraints, parent_impw,
                                w_total, classification)
            if found is not None:
                pos, gain = found
                consider(_Candidate(gain, j, False,
                                    threshold=int(nonempty[pos]),
                                    missing_left=False))
            if missing_bin >= 0 and w_bins[missing_bin] > 0:
                # Second scan with the missing bin prepended to the left side.
                plain = nonempty[nonempty != missing_bin]
                if plain.size >= 1:
                    order = np.concatenate(([missing_bin], plain))
                    if check_oob:
                        n_miss_oob = int(oob_bins[missing_bin])
                        oob_left = np.concatenate(
                            ([n_miss_oob], oob_below[plain[:-1]] + n_miss_oob))
                    else:
                        oob_left = None
                    found = _scan_order(table, order, oob_left, oob_total,
                                        criterion, constraints, parent_impw,
                                        w_total, classification)
                    if found is not None:
                        pos, gain = found
                        thr = -1 if pos == 0 else int(order[pos])
                        consider(_Candidate(gain, j, False, threshold=thr,
                                            missing_left=True))

    if best is None:
        return None
    return Split(
        feature=best.feature,
        is_categorical=best.is_categorical,
        bin_threshold=best.threshold,
        missing_goes_left=best.missing_left,
        left_mask=best.mask,
        gain=best.gain,
    )

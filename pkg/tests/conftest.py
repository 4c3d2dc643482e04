"""Shared helpers: split-search fixtures and the acceptance report."""

import numpy as np
from hypothesis import settings

from aggforest.binning import BinnedMatrix, FeatureKind

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")


def layout(kinds, n_bins, missing=None):
    """A BinnedMatrix shell carrying only the per-feature layout.

    Split search never touches the row entries, so tests can drive it from
    synthetic histograms without materializing any data.
    """
    d = len(kinds)
    if missing is None:
        missing = [-1] * d
    return BinnedMatrix(
        entries=np.zeros((0, d), dtype=np.uint8),
        n_bins=np.asarray(n_bins, dtype=np.int64),
        kinds=np.array([FeatureKind(k) for k in kinds], dtype=object),
        missing_bin=np.asarray(missing, dtype=np.int64),
    )


def random_class_table(rng, n_bins, n_classes, scale=5.0):
    """Random nonnegative weighted class counts with some empty bins."""
    table = rng.gamma(1.0, scale, size=(n_bins, n_classes))
    table[rng.random(size=(n_bins, n_classes)) < 0.25] = 0.0
    kill = rng.random(n_bins) < 0.2
    if not kill.all():        # at least one bin must keep itb weight
        table[kill] = 0.0
    if table.sum() == 0.0:    # split finders never see an empty node
        table[rng.integers(n_bins), rng.integers(n_classes)] = scale
    return table


def random_reg_table(rng, n_bins):
    """Random regression stats (weight, weighted sum, weighted sum of squares)
    built from actual draws so every bin is internally consistent."""
    table = np.zeros((n_bins, 3))
    for b in range(n_bins):
        k = int(rng.integers(0, 6))
        if k == 0:
            continue
        v = rng.normal(rng.normal(0, 2), 1.0, size=k)
        w = rng.integers(1, 3, size=k).astype(float)
        table[b] = [w.sum(), (w * v).sum(), (w * v * v).sum()]
    if not table[:, 0].any():
        v = rng.normal(size=3)
        table[0] = [3.0, v.sum(), (v * v).sum()]
    return table


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    rows = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when == "call" and "test_acceptance.py" in rep.nodeid:
                name = rep.nodeid.split("::")[-1]
                rows.append((name, outcome == "passed", rep.duration))
    for rep in terminalreporter.stats.get("error", []):
        if "test_acceptance.py" in rep.nodeid:
            rows.append((rep.nodeid.split("::")[-1], False, 0.0))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, duration in sorted(rows):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(
            f"{status}  {name.removeprefix('test_'):44s} {duration:8.1f}s")

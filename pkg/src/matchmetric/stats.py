"""Rank and linear correlation statistics.

Kendall's tau is the tie-corrected tau-b: metric scores judged against
binary labels are tie-heavy, and the uncorrected variant degenerates
there.  Spearman uses average ranks for ties and is, by construction,
Pearson applied to the ranked series.  Zero-variance input raises instead
of returning NaN so undefined cells can never poison an aggregation.
"""

from __future__ import annotations

import numpy as np


class UndefinedCorrelationError(ValueError):
    """Correlation is undefined for this input (e.g. zero variance)."""


def _as_series(x, y) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.ndim != 1 or ys.ndim != 1 or xs.shape != ys.shape:
        raise ValueError("inputs must be 1-d series of equal length")
    if xs.size < 2:
        raise UndefinedCorrelationError("need at least two observations")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("series contain non-finite values")
    return xs, ys


def pearson(x, y) -> float:
    """Product-moment correlation of two series."""
    xs, ys = _as_series(x, y)
    if np.all(xs == xs[0]) or np.all(ys == ys[0]):
        raise UndefinedCorrelationError("pearson is undefined for a constant series")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    return float(np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))


def rank_average(values) -> np.ndarray:
    """Fractional ranks (1-based); tied values share the mean of their positions."""
    vals = np.asarray(values, dtype=np.float64)
    order = np.argsort(vals, kind="stable")
    ranks = np.empty(vals.size, dtype=np.float64)
    i = 0
    while i < vals.size:
        j = i
        while j + 1 < vals.size and vals[order[j + 1]] == vals[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Rank correlation: Pearson over average-ranked data."""
    xs, ys = _as_series(x, y)
    return pearson(rank_average(xs), rank_average(ys))


def _merge_count_inversions(values: list[float]) -> int:
    """Pairs (i < j) with values[i] > values[j], by merge sort."""
    n = len(values)
    if n < 2:
        return 0
    mid = n // 2
    left = values[:mid]
    right = values[mid:]
    count = _merge_count_inversions(left) + _merge_count_inversions(right)
    i = j = k = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            values[k] = left[i]
            i += 1
        else:
            values[k] = right[j]
            j += 1
            count += len(left) - i
        k += 1
    while i < len(left):
        values[k] = left[i]
        i += 1
        k += 1
    while j < len(right):
        values[k] = right[j]
        j += 1
        k += 1
    return count


def _tie_pair_count(sorted_values: np.ndarray) -> int:
    total = 0
    run = 1
    for a, b in zip(sorted_values, sorted_values[1:]):
        if a == b:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


def kendall_tau(x, y) -> float:
    """Tie-corrected Kendall rank correlation (tau-b).

    (C - D) / sqrt((C + D + T_x)(C + D + T_y)), with C/D the concordant
    and discordant pair counts and T_x/T_y the pairs tied only in one
    series.  Computed in O(n log n) via sorting and inversion counting.
    """
    xs, ys = _as_series(x, y)
    if np.all(xs == xs[0]) or np.all(ys == ys[0]):
        raise UndefinedCorrelationError("kendall tau is undefined for a constant series")
    n = xs.size
    order = np.lexsort((ys, xs))
    xs_sorted = xs[order]
    ys_sorted = ys[order]

    total = n * (n - 1) // 2
    ties_x = _tie_pair_count(xs_sorted)
    ties_y = _tie_pair_count(np.sort(ys))
    ties_both = 0
    run = 1
    for i in range(1, n):
        if xs_sorted[i] == xs_sorted[i - 1] and ys_sorted[i] == ys_sorted[i - 1]:
            run += 1
        else:
            ties_both += run * (run - 1) // 2
            run = 1
    ties_both += run * (run - 1) // 2

    # After sorting by (x, y), discordant pairs are strict descents in y.
    discordant = _merge_count_inversions(list(ys_sorted))
    concordant_minus_discordant = total - ties_x - ties_y + ties_both - 2 * discordant
    denom = np.sqrt(float(total - ties_x) * float(total - ties_y))
    return float(concordant_minus_discordant / denom)

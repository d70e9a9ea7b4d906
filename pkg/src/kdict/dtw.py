"""Dynamic time warping distances for variable-length multichannel series."""

import numpy as np
from scipy.spatial.distance import cdist

from ._validation import check_series


def dtw_distance(a, b):
    """DTW distance between two series.

    Full-window dynamic programming with squared-Euclidean local cost between
    frames and symmetric match/insert/delete steps; returns the square root
    of the accumulated cost. Symmetric in its arguments; dtw(a, a) == 0.
    """
    a = check_series(a, name="a")
    b = check_series(b, name="b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"channel mismatch: {a.shape[1]} vs {b.shape[1]}")
    cost = cdist(a, b, "sqeuclidean")
    acc = np.empty_like(cost)
    acc[0, :] = np.cumsum(cost[0, :])
    acc[1:, 0] = cost[1:, 0]
    np.cumsum(acc[:, 0], out=acc[:, 0])
    n_b = cost.shape[1]
    for i in range(1, cost.shape[0]):
        prev = acc[i - 1]
        row = acc[i]
        left = row[0]
        for j in range(1, n_b):
            best = prev[j]
            if prev[j - 1] < best:
                best = prev[j - 1]
            if left < best:
                best = left
            left = cost[i, j] + best
            row[j] = left
    return float(np.sqrt(acc[-1, -1]))


def pairwise_distances(series):
    """Symmetric zero-diagonal matrix of DTW distances over one series list.

    Cells are independent; the loop order is just the sequential schedule.
    """
    series = [check_series(s, name=f"series[{i}]") for i, s in enumerate(series)]
    n = len(series)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = dtw_distance(series[i], series[j])
    return D


def cross_distances(queries, references):
    """Rectangular matrix of DTW distances, queries by rows."""
    D = np.zeros((len(queries), len(references)))
    for i, q in enumerate(queries):
        for j, r in enumerate(references):
            D[i, j] = dtw_distance(q, r)
    return D

"""Square linear assignment (minimum-cost perfect matching)."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def shortest_augmenting_path(cost: np.ndarray) -> np.ndarray:
    """O(n^3) Hungarian method with potentials, one augmenting path per row.

    Returns ``col`` with ``col[i]`` the column matched to row ``i``.  The inner
    Dijkstra-like scan is vectorised over columns.
    """
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n != m:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.zeros(n + 1, dtype=np.int64)  # row_of[j] = 1-based row matched to column j; column 0 is virtual
    c = np.zeros((n + 1, n + 1))
    c[1:, 1:] = cost
    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        way = np.zeros(n + 1, dtype=np.int64)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            free = ~used
            free[0] = False
            cur = c[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1
    col = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col[row_of[j] - 1] = j - 1
    return col


def solve(cost: np.ndarray, method: str = "scipy") -> np.ndarray:
    """Optimal column for each row of a square cost matrix.

    ``method="scipy"`` uses :func:`scipy.optimize.linear_sum_assignment` (a
    compiled shortest-augmenting-path solver); ``"sap"`` uses the pure numpy
    implementation above.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if method == "sap":
        return shortest_augmenting_path(cost)
    if method == "scipy":
        rows, cols = linear_sum_assignment(cost)
        out = np.empty(cost.shape[0], dtype=np.int64)
        out[rows] = cols
        return out
    raise ValueError(f"unknown assignment method {method!r}")

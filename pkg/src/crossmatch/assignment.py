"""Minimum-cost bipartite assignment with a deterministic tie-break.

`hungarian_solve` pads rectangular inputs to a square matrix and runs a
potential-based Kuhn-Munkres pass. Each cost carries an exact integer
secondary key alongside the float value; the keys encode the row-sorted pair
list as digits of a big integer, so among all minimum-cost pairings the
lexicographically smallest pair list wins. Matched pseudo-labels are
therefore reproducible run to run even on cost matrices full of ties.

`brute_force_assign` enumerates every injection and applies the same rule;
it exists as the independent test oracle and refuses matrices whose smaller
dimension exceeds 9.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, permutations

import numpy as np


@dataclass(frozen=True)
class Assignment:
    """Row-sorted (row, col) pairs and their summed cost."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float


def _pair_total(matrix: np.ndarray, pairs) -> float:
    if not pairs:
        return 0.0
    rows = np.fromiter((r for r, _ in pairs), dtype=np.intp, count=len(pairs))
    cols = np.fromiter((c for _, c in pairs), dtype=np.intp, count=len(pairs))
    return float(matrix[rows, cols].sum())


def _check_matrix(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {m.shape}")
    if m.size and not np.all(np.isfinite(m)):
        raise ValueError("cost matrix entries must be finite")
    return m


def _tie_keys(n_rows: int, n_cols: int) -> tuple[list[int], int]:
    """Per-row digit weights and the skip digit for the secondary key.

    A pairing maps to the integer whose base-(n_cols+1) digits, one per row,
    are the assigned column (or n_cols for an unassigned row). Comparing
    these integers compares row-sorted pair lists lexicographically.
    """
    base = n_cols + 1
    weights = [base ** (n_rows - 1 - i) for i in range(n_rows)]
    return weights, n_cols


def hungarian_solve(matrix) -> Assignment:
    """Minimum-cost assignment of min(rows, cols) pairs.

    Deterministic: among equal-cost optima the lexicographically smallest
    row-sorted pair list is returned. Empty matrices give an empty
    assignment.
    """
    m = _check_matrix(matrix)
    n_rows, n_cols = m.shape
    if n_rows == 0 or n_cols == 0:
        return Assignment(pairs=(), total_cost=0.0)

    n = max(n_rows, n_cols)
    weights, skip = _tie_keys(n_rows, n_cols)

    # Padded square cost: primary floats and secondary tie-break integers.
    # Pad entries cost 0; every pad row/col is forced into any perfect
    # matching, so their primary contribution is a constant.
    cost_f = [[0.0] * n for _ in range(n)]
    cost_s = [[0] * n for _ in range(n)]
    for i in range(n_rows):
        row_f, row_s, src = cost_f[i], cost_s[i], m[i]
        w = weights[i]
        for j in range(n_cols):
            row_f[j] = float(src[j])
            row_s[j] = w * j
        for j in range(n_cols, n):
            row_s[j] = w * skip

    pairs = _kuhn_munkres(cost_f, cost_s, n)
    real = tuple(
        sorted((i, j) for i, j in pairs if i < n_rows and j < n_cols)
    )
    return Assignment(pairs=real, total_cost=_pair_total(m, real))


def _kuhn_munkres(cost_f, cost_s, n: int) -> list[tuple[int, int]]:
    """Square KM over (float, int) costs compared lexicographically."""
    inf = math.inf
    u_f = [0.0] * (n + 1)
    u_s = [0] * (n + 1)
    v_f = [0.0] * (n + 1)
    v_s = [0] * (n + 1)
    match_row = [-1] * (n + 1)  # column j -> assigned row; n is a virtual col

    for i in range(n):
        match_row[n] = i
        j0 = n
        min_f = [inf] * (n + 1)
        min_s = [0] * (n + 1)
        way = [-1] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = match_row[j0]
            row_f, row_s = cost_f[i0], cost_s[i0]
            ui_f, ui_s = u_f[i0], u_s[i0]
            delta_f, delta_s, j1 = inf, 0, -1
            for j in range(n):
                if used[j]:
                    continue
                cur_f = row_f[j] - ui_f - v_f[j]
                cur_s = row_s[j] - ui_s - v_s[j]
                if cur_f < min_f[j] or (cur_f == min_f[j] and cur_s < min_s[j]):
                    min_f[j] = cur_f
                    min_s[j] = cur_s
                    way[j] = j0
                if min_f[j] < delta_f or (min_f[j] == delta_f and min_s[j] < delta_s):
                    delta_f = min_f[j]
                    delta_s = min_s[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    r = match_row[j]
                    u_f[r] += delta_f
                    u_s[r] += delta_s
                    v_f[j] -= delta_f
                    v_s[j] -= delta_s
                else:
                    if min_f[j] != inf:
                        min_f[j] -= delta_f
                        min_s[j] -= delta_s
            j0 = j1
            if match_row[j0] == -1:
                break
        # Augment along the alternating path back to the virtual column.
        while j0 != n:
            j1 = way[j0]
            match_row[j0] = match_row[j1]
            j0 = j1

    return [(match_row[j], j) for j in range(n)]


@lru_cache(maxsize=64)
def _enumeration(n_rows: int, n_cols: int) -> tuple[np.ndarray, np.ndarray]:
    """All injections as row/col index arrays, shape (n_candidates, k)."""
    k = min(n_rows, n_cols)
    rows_list, cols_list = [], []
    if n_rows <= n_cols:
        row_sets = [tuple(range(n_rows))]
        col_choices = list(permutations(range(n_cols), k))
        for rows in row_sets:
            for cols in col_choices:
                rows_list.append(rows)
                cols_list.append(cols)
    else:
        col_perms = list(permutations(range(n_cols)))
        for rows in combinations(range(n_rows), k):
            for cols in col_perms:
                rows_list.append(rows)
                cols_list.append(cols)
    return (
        np.array(rows_list, dtype=np.intp),
        np.array(cols_list, dtype=np.intp),
    )


def brute_force_assign(matrix, size_limit: int = 9) -> Assignment:
    """Exhaustive assignment oracle; same optimum and tie-break rule as
    hungarian_solve. Raises ValueError when min(rows, cols) > size_limit."""
    m = _check_matrix(matrix)
    n_rows, n_cols = m.shape
    if n_rows == 0 or n_cols == 0:
        return Assignment(pairs=(), total_cost=0.0)
    if min(n_rows, n_cols) > size_limit:
        raise ValueError(
            f"matrix min dimension {min(n_rows, n_cols)} exceeds the "
            f"brute-force limit {size_limit}"
        )

    rows_arr, cols_arr = _enumeration(n_rows, n_cols)
    totals = m[rows_arr, cols_arr].sum(axis=1)
    best = totals.min()
    tied = np.flatnonzero(totals == best)

    weights, skip = _tie_keys(n_rows, n_cols)
    best_key = None
    best_idx = -1
    for idx in tied:
        key = 0
        for r, c in zip(rows_arr[idx], cols_arr[idx]):
            key += weights[r] * (int(c) - skip)  # offset by the skip default
        if best_key is None or key < best_key:
            best_key = key
            best_idx = int(idx)

    pairs = tuple(
        sorted(zip(map(int, rows_arr[best_idx]), map(int, cols_arr[best_idx])))
    )
    return Assignment(pairs=pairs, total_cost=_pair_total(m, pairs))

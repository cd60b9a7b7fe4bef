"""Resource-block assignment solvers.

Both solvers return ``(assignment, cost)`` where ``assignment`` maps every row
to a column. Among optimal assignments the lexicographically smallest column
vector wins. Entries at or above :data:`SENTINEL` mark padding; they are
ignored by the objectives and never counted in the reported cost.
"""

from __future__ import annotations

import itertools
import math
from typing import Literal

import numpy as np

from .errors import InvalidInputError

SENTINEL = 1e12
BRUTE_FORCE_MAX_N = 9


def _square(costs) -> np.ndarray:
    c = np.asarray(getattr(costs, "cost", costs), dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InvalidInputError(f"cost matrix must be square, got shape {c.shape}")
    if np.any(np.isnan(c)) or np.any(c < 0):
        raise InvalidInputError("costs must be non-negative numbers")
    return c


def _effective(c: np.ndarray) -> np.ndarray:
    # Padding pairs cost nothing, so they never steer the optimum.
    return np.where(c >= SENTINEL, 0.0, c)


def matching_total(c, cols) -> float:
    """Exactly rounded sum over non-padding pairs (independent of summation order)."""
    c = np.asarray(c, dtype=np.float64)
    return math.fsum(float(c[i, j]) for i, j in enumerate(cols) if c[i, j] < SENTINEL)


def matching_max(c, cols) -> float:
    c = np.asarray(c, dtype=np.float64)
    vals = [float(c[i, j]) for i, j in enumerate(cols) if c[i, j] < SENTINEL]
    return max(vals, default=0.0)


def _augment(adj: list[list[int]], row: int, match_col: list[int], seen: list[bool]) -> bool:
    for col in adj[row]:
        if seen[col]:
            continue
        seen[col] = True
        if match_col[col] < 0 or _augment(adj, match_col[col], match_col, seen):
            match_col[col] = row
            return True
    return False


def _perfect_matching_exists(allowed: np.ndarray, rows: list[int], cols: list[int]) -> bool:
    """Kuhn's augmenting-path test on the sub-graph ``rows`` x ``cols`` of ``allowed``."""
    col_pos = {c: k for k, c in enumerate(cols)}
    adj = [[col_pos[c] for c in cols if allowed[r, c]] for r in rows]
    match_col = [-1] * len(cols)
    for r in range(len(rows)):
        if not _augment(adj, r, match_col, [False] * len(cols)):
            return False
    return True


def _lex_smallest_perfect(allowed: np.ndarray) -> list[int]:
    n = allowed.shape[0]
    cols_left = list(range(n))
    result = []
    for i in range(n):
        for j in cols_left:
            if not allowed[i, j]:
                continue
            rest = [c for c in cols_left if c != j]
            if _perfect_matching_exists(allowed, list(range(i + 1, n)), rest):
                result.append(j)
                cols_left = rest
                break
        else:
            raise AssertionError("allowed graph has no perfect matching")
    return result


def _hungarian_potentials(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shortest-augmenting-path Hungarian method; returns optimal dual potentials (u, v)."""
    n = c.shape[0]
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    rows = [[0.0] + [float(x) for x in c[i]] for i in range(n)]
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = rows[i0 - 1]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    return np.array(u[1:]), np.array(v[1:])


def hungarian_assign(costs) -> tuple[dict[int, int], float]:
    """Minimum-total-cost perfect matching."""
    c = _square(costs)
    n = c.shape[0]
    if n == 0:
        return {}, 0.0
    eff = _effective(c)
    u, v = _hungarian_potentials(eff)
    reduced = eff - u[:, None] - v[None, :]
    scale = float(eff.max())
    tight = reduced <= 1e-11 * scale
    cols = _lex_smallest_perfect(tight)
    return dict(enumerate(cols)), matching_total(c, cols)


def bottleneck_assign(costs) -> tuple[dict[int, int], float]:
    """Perfect matching minimizing the largest entry (binary search over thresholds)."""
    c = _square(costs)
    n = c.shape[0]
    if n == 0:
        return {}, 0.0
    eff = _effective(c)
    thresholds = np.unique(eff)
    everything = list(range(n))
    lo, hi = 0, thresholds.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_matching_exists(eff <= thresholds[mid], everything, everything):
            hi = mid
        else:
            lo = mid + 1
    cols = _lex_smallest_perfect(eff <= thresholds[lo])
    return dict(enumerate(cols)), matching_max(c, cols)


def brute_force_assign(
    costs, objective: Literal["sum", "max"] = "sum"
) -> tuple[dict[int, int], float]:
    """Exhaustive search over all permutations; the reference the solvers are checked against."""
    c = _square(costs)
    n = c.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise InvalidInputError(f"brute force refused for n={n} > {BRUTE_FORCE_MAX_N}")
    if objective not in ("sum", "max"):
        raise InvalidInputError(f"objective must be 'sum' or 'max', got {objective!r}")
    rows = [[(float(x) if x < SENTINEL else None) for x in r] for r in c]
    best_cols: tuple[int, ...] = ()
    best = math.inf
    # permutations() yields in lexicographic order, so strict < keeps the smallest tie.
    for perm in itertools.permutations(range(n)):
        vals = [x for x in (rows[i][j] for i, j in enumerate(perm)) if x is not None]
        s = math.fsum(vals) if objective == "sum" else max(vals, default=0.0)
        if s < best:
            best, best_cols = s, perm
    if n == 0:
        best = 0.0
    return dict(enumerate(best_cols)), best

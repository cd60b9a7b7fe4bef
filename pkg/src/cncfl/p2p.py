"""Serverless chain training: subset partitioning, transmission paths, chain SGD.

Unreachable client pairs are stored as ``inf`` in the consumption matrix.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError, InvalidPathError, NoFeasiblePathError
from .model import Hyperparams, ParamVector, sgd_local_train, weighted_average
from .rng import derive_seed
from .scheduler import ComputeProfile, DelayModel, local_delay

UNREACHABLE = float("inf")
HELD_KARP_MAX_N = 15


@dataclass(frozen=True, eq=False)
class ConsumptionMatrix:
    cost: np.ndarray
    unit: Literal["delay", "energy"] = "delay"

    def __post_init__(self) -> None:
        c = np.array(self.cost, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InvalidInputError(f"consumption matrix must be square, got shape {c.shape}")
        if np.any(np.isnan(c)) or np.any(c < 0):
            raise InvalidInputError("consumption costs must be non-negative or inf")
        if self.unit not in ("delay", "energy"):
            raise InvalidInputError(f"unit must be 'delay' or 'energy', got {self.unit!r}")
        np.fill_diagonal(c, UNREACHABLE)
        c.setflags(write=False)
        object.__setattr__(self, "cost", c)

    @property
    def n(self) -> int:
        return self.cost.shape[0]

    def sub(self, clients: Sequence[int]) -> ConsumptionMatrix:
        idx = np.asarray(clients, dtype=np.int64)
        return ConsumptionMatrix(self.cost[np.ix_(idx, idx)], self.unit)


def random_consumption_matrix(
    n: int,
    seed: int,
    low: float = 1.0,
    high: float = 10.0,
    unreachable_prob: float = 0.0,
    unit: Literal["delay", "energy"] = "delay",
) -> ConsumptionMatrix:
    """Asymmetric U(low, high) costs with each off-diagonal edge dropped with ``unreachable_prob``."""
    if not 0 <= unreachable_prob < 1:
        raise InvalidInputError(f"unreachable_prob must be in [0, 1), got {unreachable_prob}")
    rng = np.random.default_rng(seed)
    cost = rng.uniform(low, high, size=(n, n))
    cost[rng.random((n, n)) < unreachable_prob] = UNREACHABLE
    return ConsumptionMatrix(cost, unit)


def read_consumption_matrix(path, unit: Literal["delay", "energy"] = "delay") -> ConsumptionMatrix:
    """Parse ``n`` followed by ``n`` rows of ``n`` values; ``inf`` marks an unreachable pair."""
    tokens = Path(path).read_text().split("\n")
    lines = [ln.split() for ln in tokens if ln.strip()]
    if not lines or len(lines[0]) != 1:
        raise InvalidInputError(f"{path}: first line must hold the client count")
    try:
        n = int(lines[0][0])
        rows = [[float(tok) for tok in row] for row in lines[1:]]
    except ValueError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None
    if len(rows) != n or any(len(r) != n for r in rows):
        raise InvalidInputError(f"{path}: expected {n} rows of {n} values")
    return ConsumptionMatrix(np.array(rows).reshape(n, n), unit)


def write_consumption_matrix(g: ConsumptionMatrix, path) -> None:
    def fmt(x: float) -> str:
        return "inf" if np.isinf(x) else repr(float(x))

    lines = [str(g.n)] + [" ".join(fmt(x) for x in row) for row in g.cost]
    Path(path).write_text("\n".join(lines) + "\n")


def path_cost(g: ConsumptionMatrix, path: Sequence[int]) -> float:
    if sorted(path) != list(range(g.n)):
        raise InvalidPathError(f"path {list(path)} is not a permutation of 0..{g.n - 1}")
    total = 0.0
    for a, b in zip(path, path[1:]):
        hop = g.cost[a, b]
        if np.isinf(hop):
            raise InvalidPathError(f"hop {a}->{b} is unreachable")
        total += float(hop)
    return total


def _first_path_from(g: ConsumptionMatrix, start: int) -> list[int] | None:
    """Cheapest-neighbour-first depth-first search; the first full path wins.

    Each stack frame keeps the untried neighbours of its path head in
    (cost, id) order, so a dead end pops back and tries the next-cheapest hop.
    """
    n = g.n
    cost = g.cost

    def options(path: list[int], visited: set[int]) -> list[int]:
        head = path[-1]
        cand = [j for j in range(n) if j not in visited and not np.isinf(cost[head, j])]
        return sorted(cand, key=lambda j: (cost[head, j], j))

    path = [start]
    visited = {start}
    if n == 1:
        return path
    stack = [options(path, visited)]
    while stack:
        frame = stack[-1]
        if not frame:
            stack.pop()
            visited.discard(path.pop())
            continue
        nxt = frame.pop(0)
        path.append(nxt)
        visited.add(nxt)
        if len(path) == n:
            return path
        stack.append(options(path, visited))
    return None


def greedy_backtrack_path(g: ConsumptionMatrix) -> tuple[list[int], float]:
    """Greedy path with backtracking from every start; keep the cheapest.

    This is a heuristic: each start contributes only the first complete path
    its cheapest-first search reaches, not that start's best path.
    """
    if g.n < 1:
        raise InvalidInputError("empty consumption matrix")
    best: tuple[list[int], float] | None = None
    for start in range(g.n):
        path = _first_path_from(g, start)
        if path is None:
            continue
        c = path_cost(g, path)
        if best is None or c < best[1]:
            best = (path, c)
    if best is None:
        raise NoFeasiblePathError(f"no feasible path visits all {g.n} clients")
    return best


def held_karp_path(g: ConsumptionMatrix) -> tuple[list[int], float]:
    """Exact minimum-cost Hamiltonian path (any start, any end) by subset DP.

    ``rest[mask, v]`` is the cheapest way to finish the path from ``v`` when
    ``mask`` is already visited. Reconstruction walks forward choosing the
    smallest id among optimal continuations, which yields the
    lexicographically smallest optimal path.
    """
    n = g.n
    if n < 1:
        raise InvalidInputError("empty consumption matrix")
    if n > HELD_KARP_MAX_N:
        raise InvalidInputError(f"Held-Karp refused for n={n} > {HELD_KARP_MAX_N}")
    cost = g.cost
    full = (1 << n) - 1
    rest = np.full((1 << n, n), np.inf)
    rest[full, :] = 0.0
    bits = 1 << np.arange(n)
    for mask in range(full - 1, 0, -1):
        inside = (mask & bits) != 0
        out = ~inside
        # cand[v, u] = cost[v, u] + rest[mask | u, u] for u outside the mask.
        nxt = rest[mask | bits[out], np.flatnonzero(out)]
        cand = cost[:, out] + nxt[None, :]
        rest[mask, inside] = cand[inside].min(axis=1)

    starts = np.array([rest[1 << s, s] for s in range(n)])
    if np.all(np.isinf(starts)):
        raise NoFeasiblePathError(f"no feasible path visits all {n} clients")

    def close(a: float, b: float) -> bool:
        return a <= b + 1e-12 * max(1.0, abs(b))

    best = starts.min()
    v = next(s for s in range(n) if close(starts[s], best))
    path, mask = [v], 1 << v
    while mask != full:
        target = rest[mask, v]
        for u in range(n):
            if mask & (1 << u) or np.isinf(cost[v, u]):
                continue
            if close(cost[v, u] + rest[mask | (1 << u), u], target):
                path.append(u)
                mask |= 1 << u
                v = u
                break
        else:
            raise AssertionError("Held-Karp reconstruction lost the optimum")
    return path, path_cost(g, path)


def brute_force_path(g: ConsumptionMatrix) -> tuple[list[int], float]:
    """Enumerate every permutation (small n only)."""
    rows = g.cost.tolist()
    best: tuple[list[int], float] | None = None
    for perm in itertools.permutations(range(g.n)):
        # Same left fold as path_cost, so equal paths give bit-equal costs.
        c = 0.0
        for a, b in zip(perm, perm[1:]):
            c += rows[a][b]
        if c == math.inf:
            continue
        if best is None or c < best[1]:
            best = (list(perm), c)
    if best is None:
        raise NoFeasiblePathError(f"no feasible path visits all {g.n} clients")
    return best


def partition_balanced(
    profiles: Sequence[ComputeProfile], dm: DelayModel, E: int
) -> list[list[int]]:
    """Longest-processing-time split into ``E`` subsets with similar delay sums."""
    if not 1 <= E <= len(profiles):
        raise InvalidInputError(f"E must be in [1, {len(profiles)}], got {E}")
    ranked = sorted(profiles, key=lambda p: (-local_delay(p, dm), p.client_id))
    subsets: list[list[int]] = [[] for _ in range(E)]
    loads = [0.0] * E
    for p in ranked:
        e = min(range(E), key=lambda k: (loads[k], k))
        subsets[e].append(p.client_id)
        loads[e] += local_delay(p, dm)
    return subsets


def partition_by_speed(
    profiles: Sequence[ComputeProfile], dm: DelayModel, sizes: Sequence[int]
) -> list[list[int]]:
    """Fastest clients fill the first subset, then the next, following ``sizes``."""
    if sum(sizes) != len(profiles) or any(s < 1 for s in sizes):
        raise InvalidInputError(f"subset sizes {list(sizes)} must be positive and sum to {len(profiles)}")
    ranked = sorted(profiles, key=lambda p: (local_delay(p, dm), p.client_id))
    out, start = [], 0
    for s in sizes:
        out.append([p.client_id for p in ranked[start : start + s]])
        start += s
    return out


def chain_train(
    model: ParamVector,
    path: Sequence[int],
    shards: Mapping[int, object],
    hyper: Hyperparams,
    seed: int,
) -> ParamVector:
    """Pass the model along ``path``; each client trains with ``derive_seed(seed, client_id)``."""
    if not path:
        raise InvalidInputError("empty chain")
    w = model
    for cid in path:
        w = sgd_local_train(w, shards[cid], hyper, derive_seed(seed, cid))
    return w


def aggregate_subsets(submodels: Sequence[ParamVector], subset_data: Sequence[float]) -> ParamVector:
    return weighted_average(submodels, subset_data)

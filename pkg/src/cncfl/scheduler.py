"""Client scheduling for the server-centric architecture.

Local training delay is ``alpha * epochs * |D_i| / c_i``. Clients are ranked
by that delay, cut into tiers of similar speed, and each round draws its
participants from a single tier. Resource blocks are then assigned to the
drawn clients by one of the solvers in :mod:`cncfl.assignment`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .assignment import (  # noqa: F401  re-exported scheduler surface
    SENTINEL,
    bottleneck_assign,
    brute_force_assign,
    hungarian_assign,
)
from .channel import DETERMINISTIC, FadingModel, LinkState, RBlock, tx_delay, tx_energy, uplink_rate
from .errors import InvalidInputError, SampleRedrawError
from .rng import derive_seed

REFERENCE_DELAY_S = 4.0
REFERENCE_SHARD = 600


@dataclass(frozen=True)
class ComputeProfile:
    client_id: int
    capacity: float
    shard_size: int

    def __post_init__(self) -> None:
        if not self.capacity > 0:
            raise InvalidInputError(f"client {self.client_id}: capacity must be > 0")
        if self.shard_size < 1:
            raise InvalidInputError(f"client {self.client_id}: shard_size must be >= 1")


@dataclass(frozen=True)
class DelayModel:
    alpha: float = REFERENCE_DELAY_S / REFERENCE_SHARD
    local_epochs: int = 1

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise InvalidInputError(f"alpha must be > 0, got {self.alpha}")
        if self.local_epochs < 1:
            raise InvalidInputError(f"local_epochs must be >= 1, got {self.local_epochs}")


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Client x RB costs, padded with :data:`SENTINEL` rows to be square."""

    cost: np.ndarray
    unit: Literal["J", "s"] = "J"
    clients: tuple[int, ...] = ()

    @property
    def n_real(self) -> int:
        return len(self.clients)


@dataclass(frozen=True)
class RoundPlan:
    selected: tuple[int, ...]
    rb_of: dict[int, int] = field(default_factory=dict)
    tier_index: int | None = None


def local_delay(profile: ComputeProfile, dm: DelayModel) -> float:
    return dm.alpha * dm.local_epochs * profile.shard_size / profile.capacity


def delay_spread(selected: Sequence[ComputeProfile], dm: DelayModel) -> float:
    if not selected:
        raise InvalidInputError("delay spread of an empty selection")
    t = [local_delay(p, dm) for p in selected]
    return max(t) - min(t)


def split_tiers(profiles: Sequence[ComputeProfile], dm: DelayModel, m: int) -> list[list[ComputeProfile]]:
    """Slowest-first ranking cut into ``m`` contiguous tiers; earlier tiers absorb the remainder."""
    if not 1 <= m <= len(profiles):
        raise InvalidInputError(f"m must be in [1, {len(profiles)}], got {m}")
    ranked = sorted(profiles, key=lambda p: (-local_delay(p, dm), p.client_id))
    base, extra = divmod(len(ranked), m)
    tiers, start = [], 0
    for k in range(m):
        size = base + (1 if k < extra else 0)
        tiers.append(ranked[start : start + size])
        start += size
    return tiers


def _weighted_pick(rng: np.random.Generator, weights: Sequence[float]) -> int:
    cum = np.cumsum(np.asarray(weights, dtype=np.float64))
    u = rng.random() * cum[-1]
    return min(int(np.searchsorted(cum, u, side="right")), len(cum) - 1)


def power_tiered_sample(
    profiles: Sequence[ComputeProfile],
    dm: DelayModel,
    m: int,
    n: int,
    rng: np.random.Generator,
) -> RoundPlan:
    """Draw one tier with probability proportional to its data, then ``n`` of its clients.

    Clients are drawn sequentially without replacement, each with probability
    proportional to its shard size among those still in the tier. Raises
    :class:`SampleRedrawError` when the drawn tier holds fewer than ``n`` clients.
    """
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if n > math.ceil(len(profiles) / m):
        raise InvalidInputError(f"n={n} exceeds the largest tier size {math.ceil(len(profiles) / m)}")
    tiers = split_tiers(profiles, dm, m)
    k = _weighted_pick(rng, [sum(p.shard_size for p in tier) for tier in tiers])
    pool = list(tiers[k])
    if n > len(pool):
        raise SampleRedrawError(f"tier {k} has {len(pool)} clients, need {n}")
    chosen = []
    for _ in range(n):
        i = _weighted_pick(rng, [p.shard_size for p in pool])
        chosen.append(pool.pop(i).client_id)
    return RoundPlan(selected=tuple(chosen), tier_index=k)


def uniform_sample(num_clients: int, n: int, rng: np.random.Generator) -> RoundPlan:
    if not 1 <= n <= num_clients:
        raise InvalidInputError(f"cannot sample {n} of {num_clients} clients")
    picked = rng.choice(num_clients, size=n, replace=False)
    return RoundPlan(selected=tuple(int(c) for c in picked))


def build_cost_matrix(
    links: Sequence[LinkState],
    rbs: Sequence[RBlock],
    payload_bytes: float,
    metric: Literal["energy", "delay"] = "energy",
    fading: FadingModel = DETERMINISTIC,
    seed: int = 0,
    clients: Sequence[int] | None = None,
) -> CostMatrix:
    """Energy (J) or delay (s) of each client uploading ``payload_bytes`` on each RB.

    Fewer clients than RBs are padded with sentinel rows; more clients than
    RBs is rejected since each client needs its own block.
    """
    if metric not in ("energy", "delay"):
        raise InvalidInputError(f"metric must be 'energy' or 'delay', got {metric!r}")
    if len(links) > len(rbs):
        raise InvalidInputError(f"{len(links)} clients but only {len(rbs)} resource blocks")
    ids = tuple(range(len(links))) if clients is None else tuple(clients)
    if len(ids) != len(links):
        raise InvalidInputError(f"{len(ids)} client ids for {len(links)} links")
    size = len(rbs)
    cost = np.full((size, size), SENTINEL)
    for i, link in enumerate(links):
        # Same fading draws on every RB: the expectation is over the client's gain.
        client_seed = derive_seed(seed, ids[i])
        for k, rb in enumerate(rbs):
            rate = uplink_rate(link, rb, fading, seed=client_seed)
            delay = tx_delay(payload_bytes, rate)
            cost[i, k] = tx_energy(link, delay) if metric == "energy" else delay
    return CostMatrix(cost, "J" if metric == "energy" else "s", ids)

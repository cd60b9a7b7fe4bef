"""End-to-end experiment loops for both training architectures.

Round wall-clock accounting:

* server-centric: slowest local training among the selected clients plus the
  slowest upload;
* chain: each subset trains sequentially along its path, so a chain costs the
  sum of its clients' local delays plus its hop costs when the consumption
  matrix is in seconds; subsets run in parallel and the slowest chain sets
  the round time.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import data as datamod
from .channel import FadingModel, LinkState, RBlock, dbm_per_hz_to_w_per_hz
from .errors import ConfigError, InvalidInputError, SampleRedrawError
from .model import (
    Hyperparams,
    ParamVector,
    init_model,
    param_size_bytes,
    predict,
    sgd_local_train,
    weighted_average,
)
from .p2p import (
    ConsumptionMatrix,
    aggregate_subsets,
    chain_train,
    greedy_backtrack_path,
    held_karp_path,
    partition_balanced,
    partition_by_speed,
    random_consumption_matrix,
    read_consumption_matrix,
)
from .rng import Stream, derive_seed, stream
from .scheduler import (
    ComputeProfile,
    CostMatrix,
    DelayModel,
    RoundPlan,
    bottleneck_assign,
    brute_force_assign,
    build_cost_matrix,
    delay_spread,
    hungarian_assign,
    local_delay,
    power_tiered_sample,
    uniform_sample,
)

log = logging.getLogger(__name__)

TRADITIONAL_STRATEGIES = ("cnc_optimized", "fedavg_baseline")
P2P_STRATEGIES = ("cnc_optimized", "p2p_random_k", "p2p_full_chain", "p2p_tsp")
MAX_REDRAWS = 64
ORACLE_MAX_N = 7

# Named presets; global_epoch follows the client count (100 -> 300, 60 -> 250).
PRESETS: dict[str, dict[str, object]] = {
    "Pr1": dict(num_clients=100, cfraction=0.1, local_epoch=1, global_epoch=300),
    "Pr2": dict(num_clients=100, cfraction=0.1, local_epoch=5, global_epoch=300),
    "Pr3": dict(num_clients=100, cfraction=0.2, local_epoch=1, global_epoch=300),
    "Pr4": dict(num_clients=100, cfraction=0.2, local_epoch=5, global_epoch=300),
    "Pr5": dict(num_clients=60, cfraction=0.1, local_epoch=1, global_epoch=250),
    "Pr6": dict(num_clients=60, cfraction=0.1, local_epoch=5, global_epoch=250),
}


@dataclass(frozen=True)
class ExperimentConfig:
    architecture: str = "traditional"
    strategy: str = "cnc_optimized"
    num_clients: int = 100
    cfraction: float = 0.1
    local_epoch: int = 1
    global_epoch: int = 300
    batch_size: int = 10
    lr: float = 0.01
    seed: int = 0

    # compute heterogeneity and client selection
    m: int = 4
    capacity_levels: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0)
    alpha: float | None = None
    reference_delay_s: float = 4.0
    rb_objective: str = "sum"
    num_rbs: int | None = None

    # uplink channel
    bandwidth_hz: float = 1e6
    tx_power_w: float = 0.01
    noise_psd_dbm_hz: float = -174.0
    interference_low_w: float = 1e-8
    interference_high_w: float = 1.1e-8
    distance_max_m: float = 500.0
    rayleigh_param: float = 1.0
    fading: str = "deterministic"
    mc_samples: int = 1000
    payload_mb: float | None = 0.606

    # chain architecture
    E: int = 4
    p2p_k: int = 15
    subset_sizes: tuple[int, ...] | None = None
    matrix_path: str | None = None
    matrix_unit: str = "delay"
    matrix_low: float = 1.0
    matrix_high: float = 10.0
    unreachable_prob: float = 0.0

    # data
    dataset: str = "synthetic"
    n_samples: int = 6000
    dim: int = 10
    classes: int = 10
    separation: float = 6.0
    partition: str = "iid"
    labels_per_client: int = 2
    shard_multipliers: tuple[float, ...] | None = None
    test_fraction: float = 0.2
    idx_images: str | None = None
    idx_labels: str | None = None
    hidden: int | None = None

    # run mode
    metrics_only: bool = False
    oracle_check: bool = False

    @property
    def clients_per_round(self) -> int:
        return int(math.floor(self.cfraction * self.num_clients + 1e-9))

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def validate(self) -> ExperimentConfig:
        def bad(msg: str) -> None:
            raise ConfigError(msg)

        if self.architecture not in ("traditional", "p2p"):
            bad(f"architecture must be 'traditional' or 'p2p', got {self.architecture!r}")
        allowed = TRADITIONAL_STRATEGIES if self.architecture == "traditional" else P2P_STRATEGIES
        if self.strategy not in allowed:
            bad(f"strategy {self.strategy!r} is not valid for {self.architecture}; choose from {allowed}")
        if self.num_clients < 1:
            bad("num_clients must be >= 1")
        if not 0 < self.cfraction <= 1:
            bad(f"cfraction must be in (0, 1], got {self.cfraction}")
        if self.global_epoch < 1:
            bad("global_epoch must be >= 1")
        if self.local_epoch < 1 or self.batch_size < 1 or not self.lr > 0:
            bad("local_epoch, batch_size must be >= 1 and lr > 0")
        if self.seed < 0:
            bad("seed must be non-negative")
        if not self.capacity_levels or any(c <= 0 for c in self.capacity_levels):
            bad("capacity_levels must be positive")
        if self.fading not in ("deterministic", "rayleigh"):
            bad(f"fading must be 'deterministic' or 'rayleigh', got {self.fading!r}")
        if self.dataset not in ("synthetic", "idx"):
            bad(f"dataset must be 'synthetic' or 'idx', got {self.dataset!r}")
        if self.dataset == "idx" and not (self.idx_images and self.idx_labels):
            bad("dataset=idx needs idx_images and idx_labels")
        if self.partition not in ("iid", "label_skew"):
            bad(f"partition must be 'iid' or 'label_skew', got {self.partition!r}")
        if self.shard_multipliers is not None and len(self.shard_multipliers) != self.num_clients:
            bad(f"shard_multipliers has {len(self.shard_multipliers)} entries for {self.num_clients} clients")

        if self.architecture == "traditional":
            n = self.clients_per_round
            if n < 1:
                bad(f"cfraction*num_clients = {self.cfraction * self.num_clients:g} selects no client")
            if self.rb_objective not in ("sum", "max"):
                bad(f"rb_objective must be 'sum' or 'max', got {self.rb_objective!r}")
            if self.num_rbs is not None and self.num_rbs < n:
                bad(f"num_rbs={self.num_rbs} is fewer than the {n} clients per round")
            if self.strategy == "cnc_optimized":
                if not 1 <= self.m <= self.num_clients:
                    bad(f"m must be in [1, num_clients], got {self.m}")
                if n > math.ceil(self.num_clients / self.m):
                    bad(f"{n} clients per round exceed the tier size {math.ceil(self.num_clients / self.m)}")
        else:
            if self.strategy == "cnc_optimized":
                if self.subset_sizes is not None:
                    if sum(self.subset_sizes) != self.num_clients:
                        bad(f"subset_sizes must sum to num_clients={self.num_clients}")
                elif not 1 <= self.E <= self.num_clients:
                    bad(f"E must be in [1, num_clients], got {self.E}")
            if self.strategy == "p2p_random_k" and not 1 <= self.p2p_k <= self.num_clients:
                bad(f"p2p_k must be in [1, num_clients], got {self.p2p_k}")
            if self.matrix_unit not in ("delay", "energy"):
                bad(f"matrix_unit must be 'delay' or 'energy', got {self.matrix_unit!r}")
        return self


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig(**{**PRESETS[name], **overrides})


@dataclass(frozen=True)
class MetricsRecord:
    round: int
    strategy: str
    test_accuracy: float
    sum_tx_energy_j: float
    max_tx_delay_s: float
    max_local_delay_s: float
    delay_spread_s: float
    round_wallclock_s: float
    cum_sum_tx_energy_j: float
    cum_max_tx_delay_s: float
    cum_max_local_delay_s: float


@dataclass
class RoundInfo:
    """Everything a round decided, handed to ``on_round`` observers."""

    round: int
    model: ParamVector
    plan: RoundPlan | None = None
    energy: CostMatrix | None = None
    delay: CostMatrix | None = None
    subsets: list[list[int]] = field(default_factory=list)
    paths: list[list[int]] = field(default_factory=list)


@dataclass
class Setup:
    cfg: ExperimentConfig
    shards: list[datamod.Shard]
    test_set: datamod.Dataset
    profiles: list[ComputeProfile]
    dm: DelayModel
    model: ParamVector
    payload_bytes: int
    hyper: Hyperparams
    matrix: ConsumptionMatrix | None = None


def _capacity_of(cfg: ExperimentConfig, client: int) -> float:
    levels = cfg.capacity_levels
    return float(levels[client * len(levels) // cfg.num_clients])


def prepare(cfg: ExperimentConfig) -> Setup:
    """Build data, shards, compute profiles and the initial model for ``cfg``."""
    cfg.validate()
    if cfg.dataset == "synthetic":
        full = datamod.gen_synthetic(
            derive_seed(cfg.seed, Stream.DATA), cfg.n_samples, cfg.dim, cfg.classes, cfg.separation
        )
    else:
        full = datamod.load_idx(cfg.idx_images, cfg.idx_labels, cfg.classes)
    train, test = datamod.train_test_split(full, cfg.test_fraction, derive_seed(cfg.seed, Stream.DATA, 1))
    part_seed = derive_seed(cfg.seed, Stream.PARTITION)
    try:
        if cfg.partition == "iid":
            shards = datamod.partition_iid(train, cfg.num_clients, part_seed, cfg.shard_multipliers)
        else:
            shards = datamod.partition_label_skew(train, cfg.num_clients, cfg.labels_per_client, part_seed)
    except InvalidInputError as exc:
        raise ConfigError(f"cannot partition data: {exc}") from None

    profiles = [ComputeProfile(i, _capacity_of(cfg, i), len(s)) for i, s in enumerate(shards)]
    mean_shard = sum(len(s) for s in shards) / len(shards)
    alpha = cfg.alpha if cfg.alpha is not None else cfg.reference_delay_s / mean_shard
    dm = DelayModel(alpha, cfg.local_epoch)
    model = init_model(derive_seed(cfg.seed, Stream.INIT), train.dim, full.num_classes, cfg.hidden)

    matrix = None
    if cfg.architecture == "p2p":
        if cfg.matrix_path:
            matrix = read_consumption_matrix(cfg.matrix_path, cfg.matrix_unit)
            if matrix.n < cfg.num_clients:
                raise ConfigError(f"{cfg.matrix_path} covers {matrix.n} clients, need {cfg.num_clients}")
            matrix = matrix.sub(range(cfg.num_clients))
        else:
            matrix = random_consumption_matrix(
                cfg.num_clients,
                derive_seed(cfg.seed, Stream.MATRIX),
                cfg.matrix_low,
                cfg.matrix_high,
                cfg.unreachable_prob,
                cfg.matrix_unit,
            )
    return Setup(
        cfg=cfg,
        shards=shards,
        test_set=test,
        profiles=profiles,
        dm=dm,
        model=model,
        payload_bytes=param_size_bytes(model, cfg.payload_mb),
        hyper=Hyperparams(cfg.lr, cfg.batch_size, cfg.local_epoch),
        matrix=matrix,
    )


def evaluate(model: ParamVector, test_set) -> float:
    labels = np.asarray(test_set.labels)
    if labels.size == 0:
        raise InvalidInputError("cannot evaluate on an empty test set")
    return float(np.mean(predict(model, test_set.features) == labels))


class _Tally:
    def __init__(self) -> None:
        self.energy = 0.0
        self.tx_delay = 0.0
        self.local = 0.0

    def record(self, t: int, strategy: str, acc: float, energy: float, tx: float,
               local: float, spread: float, wall: float) -> MetricsRecord:
        self.energy += energy
        self.tx_delay += tx
        self.local += local
        return MetricsRecord(t, strategy, acc, energy, tx, local, spread, wall,
                             self.energy, self.tx_delay, self.local)


def _draw_channel(cfg: ExperimentConfig, t: int, num_rbs: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-RB interference and per-client distance for round ``t``; strategy-independent."""
    rng = stream(cfg.seed, Stream.CHANNEL, t)
    interference = rng.uniform(cfg.interference_low_w, cfg.interference_high_w, size=num_rbs)
    distance = rng.uniform(0.0, cfg.distance_max_m, size=cfg.num_clients)
    # d = 0 makes the d^-2 gain singular.
    while np.any(distance <= 0):
        zero = distance <= 0
        distance[zero] = rng.uniform(0.0, cfg.distance_max_m, size=int(zero.sum()))
    return interference, distance


def _select(cfg: ExperimentConfig, setup: Setup, t: int) -> RoundPlan:
    n = cfg.clients_per_round
    if cfg.strategy == "fedavg_baseline":
        return uniform_sample(cfg.num_clients, n, stream(cfg.seed, Stream.SELECT, t))
    for attempt in range(MAX_REDRAWS):
        try:
            return power_tiered_sample(
                setup.profiles, setup.dm, cfg.m, n, stream(cfg.seed, Stream.SELECT, t, attempt)
            )
        except SampleRedrawError:
            continue
    raise ConfigError(f"round {t}: no tier with {n} clients after {MAX_REDRAWS} draws")


def _local_round(setup: Setup, w: ParamVector, clients: Sequence[int], t: int) -> ParamVector:
    cfg = setup.cfg
    order = sorted(clients)
    models = [
        sgd_local_train(w, setup.shards[c], setup.hyper, derive_seed(cfg.seed, Stream.TRAIN, t, c))
        for c in order
    ]
    return weighted_average(models, [len(setup.shards[c]) for c in order])


def run_traditional(
    cfg: ExperimentConfig,
    *,
    setup: Setup | None = None,
    forced_selections: Sequence[Sequence[int]] | None = None,
    on_round: Callable[[MetricsRecord, RoundInfo], None] | None = None,
) -> list[MetricsRecord]:
    """Server-centric federated training.

    ``forced_selections[t-1]`` overrides the round-``t`` client draw, which
    lets two strategies be compared on identical participant sets.
    """
    if cfg.architecture != "traditional":
        raise ConfigError("run_traditional needs architecture=traditional")
    setup = setup or prepare(cfg)
    n = cfg.clients_per_round
    num_rbs = cfg.num_rbs or n
    fading = FadingModel(cfg.fading, cfg.mc_samples)
    noise = dbm_per_hz_to_w_per_hz(cfg.noise_psd_dbm_hz)
    if forced_selections is not None and len(forced_selections) < cfg.global_epoch:
        raise ConfigError("forced_selections must cover every round")

    w = setup.model
    acc = evaluate(w, setup.test_set)
    tally = _Tally()
    records = []
    for t in range(1, cfg.global_epoch + 1):
        if forced_selections is not None:
            plan = RoundPlan(tuple(int(c) for c in forced_selections[t - 1]))
        else:
            plan = _select(cfg, setup, t)
        selected = plan.selected
        if len(selected) > num_rbs:
            raise ConfigError(f"round {t}: {len(selected)} clients but {num_rbs} resource blocks")

        interference, distance = _draw_channel(cfg, t, num_rbs)
        links = [LinkState(float(distance[c]), cfg.rayleigh_param, cfg.tx_power_w, noise) for c in selected]
        rbs = [RBlock(k, cfg.bandwidth_hz, float(interference[k])) for k in range(num_rbs)]
        fseed = derive_seed(cfg.seed, Stream.FADING, t)
        energy = build_cost_matrix(links, rbs, setup.payload_bytes, "energy", fading, fseed, selected)
        delay = build_cost_matrix(links, rbs, setup.payload_bytes, "delay", fading, fseed, selected)

        if cfg.strategy == "cnc_optimized":
            target = energy if cfg.rb_objective == "sum" else delay
            solver = hungarian_assign if cfg.rb_objective == "sum" else bottleneck_assign
            assignment, cost = solver(target)
            if cfg.oracle_check and len(selected) <= ORACLE_MAX_N and num_rbs <= ORACLE_MAX_N:
                _, oracle = brute_force_assign(target, cfg.rb_objective)
                if cost != oracle:
                    raise AssertionError(f"round {t}: solver cost {cost!r} != brute force {oracle!r}")
        else:
            perm = stream(cfg.seed, Stream.ASSIGN, t).permutation(num_rbs)
            assignment = {i: int(perm[i]) for i in range(num_rbs)}
        plan = dataclasses.replace(plan, rb_of={c: assignment[i] for i, c in enumerate(selected)})

        e = [float(energy.cost[i, plan.rb_of[c]]) for i, c in enumerate(selected)]
        l_tx = [float(delay.cost[i, plan.rb_of[c]]) for i, c in enumerate(selected)]
        chosen = [setup.profiles[c] for c in selected]
        t_local = max(local_delay(p, setup.dm) for p in chosen)
        spread = delay_spread(chosen, setup.dm)

        if not cfg.metrics_only:
            w = _local_round(setup, w, selected, t)
            acc = evaluate(w, setup.test_set)

        rec = tally.record(t, cfg.strategy, acc, math.fsum(e), max(l_tx), t_local, spread, t_local + max(l_tx))
        records.append(rec)
        log.info("round %d acc=%.4f energy=%.4g J tx=%.4g s spread=%.4g s",
                 t, acc, rec.sum_tx_energy_j, rec.max_tx_delay_s, spread)
        if on_round is not None:
            on_round(rec, RoundInfo(t, w, plan, energy, delay))
    return records


def _p2p_subsets(cfg: ExperimentConfig, setup: Setup, t: int) -> list[list[int]]:
    if cfg.strategy == "cnc_optimized":
        if cfg.subset_sizes is not None:
            return partition_by_speed(setup.profiles, setup.dm, cfg.subset_sizes)
        return partition_balanced(setup.profiles, setup.dm, cfg.E)
    if cfg.strategy == "p2p_random_k":
        picked = stream(cfg.seed, Stream.SELECT, t).choice(cfg.num_clients, cfg.p2p_k, replace=False)
        return [sorted(int(c) for c in picked)]
    return [list(range(cfg.num_clients))]


def run_p2p(
    cfg: ExperimentConfig,
    *,
    setup: Setup | None = None,
    matrix: ConsumptionMatrix | None = None,
    on_round: Callable[[MetricsRecord, RoundInfo], None] | None = None,
) -> list[MetricsRecord]:
    """Chain training: each subset passes the model along its path, then sub-models are averaged."""
    if cfg.architecture != "p2p":
        raise ConfigError("run_p2p needs architecture=p2p")
    setup = setup or prepare(cfg)
    g = matrix if matrix is not None else setup.matrix
    if g.n != cfg.num_clients:
        raise ConfigError(f"consumption matrix covers {g.n} clients, config has {cfg.num_clients}")
    solve = held_karp_path if cfg.strategy == "p2p_tsp" else greedy_backtrack_path

    w = setup.model
    acc = evaluate(w, setup.test_set)
    tally = _Tally()
    records = []
    for t in range(1, cfg.global_epoch + 1):
        subsets = _p2p_subsets(cfg, setup, t)
        paths, hops = [], []
        for subset in subsets:
            local_path, hop_cost = solve(g.sub(subset))
            paths.append([subset[j] for j in local_path])
            hops.append(hop_cost)
        chain_local = [math.fsum(local_delay(setup.profiles[c], setup.dm) for c in s) for s in subsets]
        hop_delay = hops if g.unit == "delay" else [0.0] * len(hops)

        if not cfg.metrics_only:
            chain_seed = derive_seed(cfg.seed, Stream.TRAIN, t)
            submodels = [chain_train(w, p, setup.shards, setup.hyper, chain_seed) for p in paths]
            weights = [sum(len(setup.shards[c]) for c in s) for s in subsets]
            w = aggregate_subsets(submodels, weights)
            acc = evaluate(w, setup.test_set)

        energy = math.fsum(hops) if g.unit == "energy" else 0.0
        wall = max(a + b for a, b in zip(chain_local, hop_delay))
        rec = tally.record(t, cfg.strategy, acc, energy, max(hop_delay), max(chain_local),
                           max(chain_local) - min(chain_local), wall)
        records.append(rec)
        log.info("round %d acc=%.4f wallclock=%.4g", t, acc, wall)
        if on_round is not None:
            on_round(rec, RoundInfo(t, w, subsets=subsets, paths=paths))
    return records


def run(cfg: ExperimentConfig, **kwargs) -> list[MetricsRecord]:
    cfg.validate()
    if cfg.architecture == "traditional":
        return run_traditional(cfg, **kwargs)
    return run_p2p(cfg, **kwargs)


@dataclass(frozen=True)
class SweepRow:
    count: int
    strategy: str
    mean_round_wallclock_s: float


def sweep_clients(
    cfg: ExperimentConfig,
    client_counts: Sequence[int],
    strategies: Sequence[str] = ("cnc_optimized", "p2p_full_chain"),
    rounds: int = 5,
    clients_per_subset: int = 4,
) -> list[SweepRow]:
    """Mean chain-architecture round time as the population grows.

    Samples per client stay fixed, so total data grows with the count. The
    optimized strategy uses ``E = count // clients_per_subset`` subsets.
    """
    if cfg.architecture != "p2p":
        raise ConfigError("sweep_clients needs architecture=p2p")
    per_client = cfg.n_samples / cfg.num_clients
    rows = []
    for count in client_counts:
        for strategy in strategies:
            sub = cfg.replace(
                num_clients=count,
                strategy=strategy,
                n_samples=max(int(round(per_client * count)), cfg.classes, 2 * count),
                global_epoch=rounds,
                E=max(1, count // clients_per_subset),
                p2p_k=min(cfg.p2p_k, count),
                subset_sizes=None,
                shard_multipliers=None,
            )
            records = run_p2p(sub)
            rows.append(SweepRow(count, strategy, float(np.mean([r.round_wallclock_s for r in records]))))
    return rows

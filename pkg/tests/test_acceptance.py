"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s``; the summary block at the
end of any pytest session also lists every criterion that ran.
"""

import itertools
import time

import numpy as np

from cncfl.assignment import bottleneck_assign, brute_force_assign, hungarian_assign
from cncfl.cli import main
from cncfl.data import gen_synthetic, train_test_split
from cncfl.engine import ExperimentConfig, evaluate, prepare, preset, run, run_p2p, run_traditional, sweep_clients
from cncfl.model import Hyperparams, gradient, init_model, sgd_local_train
from cncfl.oracles import finite_difference_gradient, max_relative_error
from cncfl.p2p import aggregate_subsets, brute_force_path, greedy_backtrack_path, held_karp_path, path_cost, random_consumption_matrix
from cncfl.rng import Stream, derive_seed


def test_criterion_1_assignment_exactness(acceptance):
    start = time.perf_counter()
    gen = np.random.default_rng(1)
    mismatches = 0
    for _ in range(200):
        c = gen.random((6, 6))
        mismatches += hungarian_assign(c)[1] != brute_force_assign(c, "sum")[1]
    for bits in itertools.product((0.0, 1.0), repeat=9):
        c = np.array(bits).reshape(3, 3)
        mismatches += hungarian_assign(c)[1] != brute_force_assign(c, "sum")[1]
    for _ in range(200):
        c = gen.random((5, 5))
        mismatches += bottleneck_assign(c)[1] != brute_force_assign(c, "max")[1]
    elapsed = time.perf_counter() - start
    acceptance.check(1, "assignment solver exactness", mismatches == 0 and elapsed < 10,
                     f"{mismatches} mismatches over 912 instances in {elapsed:.1f}s (limit 10s)")


def test_criterion_2_path_soundness(acceptance):
    start = time.perf_counter()
    bad = 0
    for s in range(100):
        g = random_consumption_matrix(8, seed=s)
        path, cost = greedy_backtrack_path(g)
        valid = sorted(path) == list(range(8)) and path_cost(g, path) == cost
        bad += not valid or cost < held_karp_path(g)[1]
    for s in range(100):
        g = random_consumption_matrix(4, seed=1000 + s)
        bad += held_karp_path(g)[1] != brute_force_path(g)[1]
    elapsed = time.perf_counter() - start
    acceptance.check(2, "path solver soundness", bad == 0 and elapsed < 20,
                     f"{bad} violations over 200 instances in {elapsed:.1f}s (limit 20s)")


def test_criterion_3_gradient(acceptance):
    start = time.perf_counter()
    gen = np.random.default_rng(3)
    worst = 0.0
    for k in range(50):
        dim, classes = int(gen.integers(1, 8)), int(gen.integers(2, 6))
        params = init_model(k, dim, classes, hidden=None if k % 2 else 4)
        params = params.replace(params.values + gen.normal(0, 0.5, size=len(params)))
        x = gen.normal(size=(int(gen.integers(1, 10)), dim))
        y = gen.integers(0, classes, size=x.shape[0])
        fd = finite_difference_gradient(params, x, y)
        worst = max(worst, max_relative_error(gradient(params, x, y).values, fd))
    elapsed = time.perf_counter() - start
    acceptance.check(3, "gradient vs finite differences", worst < 1e-4 and elapsed < 5,
                     f"max relative error {worst:.2e} (limit 1e-4) in {elapsed:.1f}s")


def test_criterion_4_delay_spread(acceptance):
    start = time.perf_counter()
    cfg = ExperimentConfig(num_clients=60, cfraction=0.1, global_epoch=300, n_samples=6000,
                           capacity_levels=(1, 2, 3, 4), m=4, metrics_only=True, seed=4)
    setup = prepare(cfg)
    assert len({len(s) for s in setup.shards}) == 1
    tiered = [r.delay_spread_s for r in run_traditional(cfg, setup=setup)]
    uniform = [r.delay_spread_s for r in run_traditional(cfg.replace(strategy="fedavg_baseline"), setup=setup)]
    elapsed = time.perf_counter() - start
    mean_ratio = np.mean(tiered) / np.mean(uniform)
    max_ratio = max(tiered) / max(uniform)
    ok = mean_ratio <= 0.5 and max_ratio <= 0.7 and elapsed < 120
    acceptance.check(4, "delay-spread reduction", ok,
                     f"mean spread {np.mean(tiered):.3g}s vs {np.mean(uniform):.3g}s (ratio {mean_ratio:.3f}, limit 0.5); "
                     f"max {max(tiered):.3g}s vs {max(uniform):.3g}s (ratio {max_ratio:.3f}, limit 0.7); {elapsed:.1f}s")


def test_criterion_5_energy_dominance(acceptance):
    start = time.perf_counter()
    cfg = ExperimentConfig(num_clients=10, cfraction=1.0, m=1, global_epoch=300, n_samples=2000,
                           num_rbs=10, metrics_only=True, seed=5)
    everyone = [list(range(10))] * cfg.global_epoch
    opt = run_traditional(cfg, forced_selections=everyone)
    base = run_traditional(cfg.replace(strategy="fedavg_baseline"), forced_selections=everyone)
    elapsed = time.perf_counter() - start
    violations = sum(a.sum_tx_energy_j > b.sum_tx_energy_j for a, b in zip(opt, base))
    reduction = np.mean([1 - a.sum_tx_energy_j / b.sum_tx_energy_j for a, b in zip(opt, base)])
    print(f"criterion 5 dominance: {violations} violations over 300 rounds")
    ok = violations == 0 and reduction >= 0.10 and elapsed < 120
    acceptance.check(5, "communication-cost dominance", ok,
                     f"{violations} dominance violations; mean energy reduction {reduction:.2%} "
                     f"(required >= 10%); {elapsed:.1f}s")


def test_criterion_6_learning(acceptance):
    start = time.perf_counter()
    cfg = ExperimentConfig(num_clients=20, cfraction=0.2, global_epoch=100, lr=0.01, batch_size=10,
                           dim=10, classes=10, separation=6.0, n_samples=6000, seed=6)
    # Centralized oracle first, on the same train/test split the federated run uses.
    full = gen_synthetic(derive_seed(cfg.seed, Stream.DATA), cfg.n_samples, cfg.dim, cfg.classes, cfg.separation)
    train, test = train_test_split(full, cfg.test_fraction, derive_seed(cfg.seed, Stream.DATA, 1))
    central = sgd_local_train(init_model(0, cfg.dim, cfg.classes), train, Hyperparams(0.01, 10, 50), seed=0)
    oracle_acc = evaluate(central, test)
    assert oracle_acc >= 0.95, f"centralized oracle reached only {oracle_acc:.3f}"
    records = run(cfg)
    best = max(r.test_accuracy for r in records)
    elapsed = time.perf_counter() - start
    acceptance.check(6, "learning end-to-end", best >= 0.90 and elapsed < 300,
                     f"federated accuracy {best:.3f} within 100 rounds (final {records[-1].test_accuracy:.3f}, "
                     f"limit 0.90); centralized oracle {oracle_acc:.3f}; {elapsed:.1f}s")


def test_criterion_7_chain_equivalence(acceptance):
    start = time.perf_counter()
    cfg = ExperimentConfig(architecture="p2p", strategy="p2p_full_chain", num_clients=6, global_epoch=3,
                           n_samples=600, lr=0.02, seed=7)
    setup = prepare(cfg)
    models, paths = [], []
    run_p2p(cfg, setup=setup, on_round=lambda rec, info: (models.append(info.model), paths.append(info.paths[0])))
    w = setup.model
    worst = 0.0
    for t, (got, path) in enumerate(zip(models, paths), start=1):
        chain_seed = derive_seed(cfg.seed, Stream.TRAIN, t)
        for c in path:
            w = sgd_local_train(w, setup.shards[c], setup.hyper, derive_seed(chain_seed, c))
        worst = max(worst, float(np.abs(got.values - w.values).max()))
    gen = np.random.default_rng(7)
    subs = [setup.model.replace(gen.normal(size=len(setup.model))) for _ in range(3)]
    mean_err = float(np.abs(aggregate_subsets(subs, [50, 50, 50]).values
                            - sum(s.values for s in subs) / 3).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and mean_err <= 1e-12 and elapsed < 30
    acceptance.check(7, "p2p chain equivalence", ok,
                     f"chain max deviation {worst:.1e}, equal-weight mean deviation {mean_err:.1e} "
                     f"(limit 1e-12); {elapsed:.1f}s")


def test_criterion_8_sweep_direction(acceptance):
    start = time.perf_counter()
    cfg = ExperimentConfig(architecture="p2p", num_clients=20, n_samples=2000, metrics_only=True, seed=8)
    rows = sweep_clients(cfg, [4, 8, 12, 16, 20], rounds=5)
    table = {(r.count, r.strategy): r.mean_round_wallclock_s for r in rows}
    elapsed = time.perf_counter() - start
    below = all(table[(n, "cnc_optimized")] < table[(n, "p2p_full_chain")] for n in (8, 12, 16, 20))
    detail = ", ".join(f"{n}: {table[(n, 'cnc_optimized')]:.1f} vs {table[(n, 'p2p_full_chain')]:.1f}"
                       for n in (4, 8, 12, 16, 20))
    acceptance.check(8, "client sweep direction", below and elapsed < 180, f"{detail} s; {elapsed:.1f}s")


def test_criterion_9_determinism(acceptance, tmp_path):
    start = time.perf_counter()
    outputs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["run", "--preset", "Pr1", "--strategy", "cnc_optimized", "--seed", "1",
                     "--out", str(out / "run")]) == 0
        assert main(["compare", "--preset", "Pr5", "--strategies", "cnc_optimized", "fedavg_baseline",
                     "--seed", "1", "--out", str(out / "cmp")]) == 0
        outputs.append([p.read_bytes() for p in sorted(out.rglob("*.csv"))])
    elapsed = time.perf_counter() - start
    same = len(outputs[0]) == 2 and outputs[0] == outputs[1]
    acceptance.check(9, "byte-identical reruns", same and elapsed < 60,
                     f"run and compare CSVs identical: {same}; {elapsed:.1f}s")

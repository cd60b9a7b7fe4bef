"""Command-line entry point: ``cncfl run | compare | sweep | oracle-check | plot``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import config as cfgmod
from .assignment import BRUTE_FORCE_MAX_N, bottleneck_assign, brute_force_assign, hungarian_assign
from .engine import ExperimentConfig, MetricsRecord, run, sweep_clients
from .errors import ConfigError, InvalidInputError
from .model import gradient, init_model
from .oracles import finite_difference_gradient, max_relative_error
from .p2p import HELD_KARP_MAX_N, ConsumptionMatrix, brute_force_path, greedy_backtrack_path, held_karp_path
from .plot import MissingFieldError, plot_csv
from .rng import stream

SCHEMA_VERSION = 1
CSV_FIELDS = (
    "schema_version",
    "round",
    "strategy",
    "test_accuracy",
    "sum_tx_energy_j",
    "max_tx_delay_s",
    "max_local_delay_s",
    "delay_spread_s",
    "round_wallclock_s",
    "cum_sum_tx_energy_j",
    "cum_max_tx_delay_s",
    "cum_max_local_delay_s",
)
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
GRADIENT_TOL = 1e-4
PATH_BRUTE_FORCE_MAX_N = 7

log = logging.getLogger("cncfl")


def fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def records_to_csv(records: Sequence[MetricsRecord], labels: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for k, rec in enumerate(records):
        row = {name: getattr(rec, name, None) for name in CSV_FIELDS}
        row["schema_version"] = SCHEMA_VERSION
        if labels is not None:
            row["strategy"] = labels[k]
        writer.writerow(fmt(row[name]) for name in CSV_FIELDS)
    return buf.getvalue()


def _parse_sets(pairs: Sequence[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _resolve_args(args, strategy: str | None = None) -> tuple[ExperimentConfig, str]:
    """Resolved config plus the file-name tag (preset name or config hash)."""
    file_values = cfgmod.load_file(args.config) if args.config else {}
    overrides = _parse_sets(args.set)
    if strategy is not None:
        overrides["strategy"] = strategy
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    preset = args.preset or file_values.get("preset")
    cfg = cfgmod.resolve(file_values, overrides, args.preset)
    tag = f"{preset}-{cfgmod.config_hash(cfg)}" if preset else f"cfg-{cfgmod.config_hash(cfg)}"
    return cfg, tag


def _summary(records: Sequence[MetricsRecord]) -> str:
    last = records[-1]
    total_delay = sum(r.round_wallclock_s for r in records)
    return (f"final_accuracy={last.test_accuracy:.4f} total_energy_j={fmt(last.cum_sum_tx_energy_j)} "
            f"total_delay_s={fmt(total_delay)}")


def cmd_run(args) -> int:
    cfg, tag = _resolve_args(args, args.strategy)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{tag}_{cfg.strategy}_s{cfg.seed}"
    records = run(cfg)
    csv_path = out_dir / f"{stem}.csv"
    csv_path.write_text(records_to_csv(records))
    manifest = out_dir / f"{stem}.manifest.json"
    cfgmod.write_manifest(manifest, cfg, args.config, out_dir, [csv_path])
    print(f"{cfg.strategy}: {_summary(records)} csv={csv_path}")
    return EXIT_OK


def _strategy_spec(spec: str) -> tuple[str, dict[str, str]]:
    """``name`` or ``name:key=value,key=value``."""
    name, _, rest = spec.partition(":")
    return name, _parse_sets([kv for kv in rest.split(",") if kv]) if rest else {}


def cmd_compare(args) -> int:
    if len(args.strategies) < 2:
        print("compare needs at least two strategies", file=sys.stderr)
        return EXIT_USAGE
    if len(set(args.strategies)) != len(args.strategies):
        print("compare strategies must be distinct", file=sys.stderr)
        return EXIT_USAGE
    runs = []
    tags = []
    for spec in args.strategies:
        name, extra = _strategy_spec(spec)
        sub = argparse.Namespace(**{**vars(args), "set": [*args.set, *(f"{k}={v}" for k, v in extra.items())]})
        cfg, tag = _resolve_args(sub, name)
        runs.append((spec, cfg, run(cfg)))
        tags.append(tag)

    rounds = max(len(r) for _, _, r in runs)
    merged, labels = [], []
    for t in range(rounds):
        for spec, _, records in runs:
            if t < len(records):
                merged.append(records[t])
                labels.append(spec)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = runs[0][1].seed
    stem = f"{tags[0]}_compare_s{seed}"
    csv_path = out_dir / f"{stem}.csv"
    csv_path.write_text(records_to_csv(merged, labels))
    cfgmod.write_manifest(out_dir / f"{stem}.manifest.json", runs[0][1], args.config, out_dir, [csv_path])
    for spec, _, records in runs:
        print(f"{spec}: {_summary(records)}")
    print(f"csv={csv_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, tag = _resolve_args(args)
    rows = sweep_clients(cfg, args.counts, args.strategies, args.rounds, args.clients_per_subset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{tag}_sweep_s{cfg.seed}.csv"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["schema_version", "num_clients", "strategy", "mean_round_wallclock_s"])
    for row in rows:
        writer.writerow([SCHEMA_VERSION, row.count, row.strategy, fmt(row.mean_round_wallclock_s)])
    csv_path.write_text(buf.getvalue())
    for row in rows:
        print(f"{row.count:>4} {row.strategy:<16} {fmt(row.mean_round_wallclock_s)}")
    print(f"csv={csv_path}")
    return EXIT_OK


def _corrupt(assignment: dict[int, int]) -> dict[int, int]:
    if len(assignment) < 2:
        return {k: v + 1 for k, v in assignment.items()}
    out = dict(assignment)
    out[0], out[1] = out[1], out[0]
    return out


def oracle_check(sizes: Sequence[int], trials: int, seed: int, inject_fault: bool = False) -> dict[str, tuple[int, int]]:
    """Solver-vs-oracle sweeps; returns ``{check: (passed, run)}``."""
    results: dict[str, list[int]] = {}

    def tally(name: str, ok: bool) -> None:
        counts = results.setdefault(name, [0, 0])
        counts[0] += int(ok)
        counts[1] += 1

    for size in sizes:
        rng = stream(seed, size)
        for _ in range(trials):
            c = rng.random((size, size))
            h = hungarian_assign(c)
            if inject_fault:
                h = (_corrupt(h[0]), h[1] + 1.0)
            tally("hungarian", h == brute_force_assign(c, "sum"))
            tally("bottleneck", bottleneck_assign(c) == brute_force_assign(c, "max"))

            g = ConsumptionMatrix(rng.uniform(1.0, 10.0, size=(size, size)))
            hk_path, hk = held_karp_path(g)
            if size <= PATH_BRUTE_FORCE_MAX_N:
                tally("held_karp", (hk_path, hk) == brute_force_path(g))
            gp, gc = greedy_backtrack_path(g)
            tally("greedy_vs_held_karp", sorted(gp) == list(range(size)) and gc >= hk)

            dim, classes = max(size, 1), 3
            params = init_model(int(rng.integers(2**31)), dim, classes)
            params = params.replace(params.values + rng.normal(0, 0.5, size=len(params)))
            x = rng.normal(size=(5, dim))
            y = rng.integers(0, classes, size=5)
            err = max_relative_error(gradient(params, x, y).values, finite_difference_gradient(params, x, y))
            tally("gradient", err < GRADIENT_TOL)
    return {k: (v[0], v[1]) for k, v in results.items()}


def cmd_oracle_check(args) -> int:
    for size in args.sizes:
        if not 1 <= size <= BRUTE_FORCE_MAX_N:
            print(f"size {size} outside the oracle guard [1, {BRUTE_FORCE_MAX_N}] "
                  f"(Held-Karp allows up to {HELD_KARP_MAX_N})", file=sys.stderr)
            return EXIT_USAGE
    if args.trials < 0:
        print("trials must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    if args.trials == 0:
        print("warning: 0 trials requested; nothing checked (vacuous pass)", file=sys.stderr)
        return EXIT_OK
    results = oracle_check(args.sizes, args.trials, args.seed, args.inject_fault)
    failed = False
    for name, (ok, total) in results.items():
        word = "exact" if name != "greedy_vs_held_karp" and name != "gradient" else "ok"
        print(f"{name}: {ok}/{total} {word}")
        failed |= ok != total
    return EXIT_FAIL if failed else EXIT_OK


def cmd_plot(args) -> int:
    try:
        drawn = plot_csv(args.csv, args.x, args.y, args.out)
    except MissingFieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if drawn == 0:
        print(f"warning: {args.csv} has no data rows; wrote empty axes", file=sys.stderr)
    print(f"svg={args.out}")
    return EXIT_OK


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="key=value config file or run manifest (.json)")
    p.add_argument("--preset", help="Pr1..Pr6 shorthand")
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--out", default="runs", help="output directory (default: runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cncfl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log one line per round")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment and write its metrics CSV")
    _config_args(p)
    p.add_argument("--strategy")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several strategies on the same seed")
    _config_args(p)
    p.add_argument("--strategies", nargs="+", required=True,
                   help="strategy names, optionally with overrides: cnc_optimized:E=2")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="mean chain round time versus number of clients")
    _config_args(p)
    p.add_argument("--counts", type=int, nargs="*", default=[4, 8, 12, 16, 20])
    p.add_argument("--strategies", nargs="+", default=["cnc_optimized", "p2p_full_chain"])
    p.add_argument("--rounds", type=int, default=5)
    p.add_argument("--clients-per-subset", type=int, default=4)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="cross-check solvers against exhaustive oracles")
    p.add_argument("--sizes", type=int, nargs="+", default=[6])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("plot", help="render CSV series to SVG")
    p.add_argument("csv")
    p.add_argument("x")
    p.add_argument("y")
    p.add_argument("out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, AssertionError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

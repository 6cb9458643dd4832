"""Command-line entry point: ``holocrack <subcommand> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .experiments import (
    EXPERIMENT_IDS,
    build_experiment,
    generate_target,
    quartiles,
    run_ablation,
    run_detect,
    run_epoch_sweep,
    run_forward,
    sweep_table,
    write_run,
)
from .inverse import Crack
from .sensors import SensorArray

log = logging.getLogger("holocrack")


def _load_overrides(args) -> dict:
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(json.loads(Path(args.config).read_text()))
    for key in ("epochs_long", "epochs_short_cap"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return overrides


def _sensors(args, spec):
    if getattr(args, "target", None):
        return SensorArray.load(args.target)
    return generate_target(spec, noise_std=getattr(args, "noise", None), seed=args.seed)


def _write_csv(path, rows):
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def cmd_generate_target(args) -> int:
    spec = build_experiment(args.experiment)
    out = Path(args.out or Path(args.out_dir) / f"target_{args.experiment}.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    data = generate_target(spec, out, noise_std=args.noise, seed=args.seed)
    print(f"wrote {len(data)} sensors to {out}")
    return 0


def cmd_detect(args) -> int:
    spec = build_experiment(args.experiment)
    record, _ = run_detect(spec, args.seed, _load_overrides(args), args.evaluator, args.termination,
                           not args.single_stage, _sensors(args, spec), args.out_dir, args.workers)
    print(f"{record.status}: best fitness {record.best_fitness:.3e}, tip error {record.tip_error:.4f}, "
          f"generations {record.generations_long}+{record.generations_short}, "
          f"{record.evaluations} evaluations, {record.wall_time:.1f} s")
    return 0


def cmd_forward(args) -> int:
    spec = build_experiment(args.experiment)
    if args.load is not None:
        spec = spec.with_load(args.load)
    crack = Crack(complex(*args.crack[:2]), complex(*args.crack[2:])) if args.crack else None
    report = run_forward(spec, crack, args.evaluator, args.epochs, args.seed, grid=args.grid)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"x": z.real, "y": z.imag, "exx": e[0], "eyy": e[1], "exy": e[2]}
            for z, e in zip(report["locations"], report["strains"])]
    _write_csv(out / f"forward_{spec.id}_{args.evaluator}_sensors.csv", rows)
    if "grid" in report:
        g = report["grid"]
        _write_csv(out / f"forward_{spec.id}_{args.evaluator}_grid.csv",
                   ({"x": z.real, "y": z.imag, "sxx": a, "syy": b, "sxy": c, "ux": d, "uy": e}
                    for z, a, b, c, d, e in zip(g["z"], g["sxx"], g["syy"], g["sxy"], g["ux"], g["uy"])))
    for r in rows:
        print(f"({r['x']:+.2f}, {r['y']:+.2f})  exx {r['exx']:+.6e}  eyy {r['eyy']:+.6e}  exy {r['exy']:+.6e}")
    return 0


def cmd_epoch_sweep(args) -> int:
    spec = build_experiment(args.experiment)
    sensors = _sensors(args, spec)
    cells = run_epoch_sweep(spec, args.epochs, range(args.seed, args.seed + args.seeds), _load_overrides(args),
                            args.evaluator, sensors)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / f"epoch_sweep_{spec.id}_runs.csv", (vars(c) for c in cells))
    table = sweep_table(cells)
    _write_csv(out / f"epoch_sweep_{spec.id}.csv", table)
    for row in table:
        print(f"epochs {row['epochs']:5d}: mean generations {row['mean_generations']:.1f}, "
              f"censored {row['censored']}/{row['runs']}, mean time {row['mean_wall_time']:.1f} s")
    return 0


def cmd_bench(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    overrides = _load_overrides(args)
    seeds = list(range(args.seed, args.seed + args.seeds))
    summary = []
    for exp_id in args.experiments:
        spec = build_experiment(exp_id)
        sensors = generate_target(spec)
        if args.ablation:
            res = run_ablation(spec, seeds, overrides, args.evaluator, sensors)
            for key, records in res.items():
                summary.append({"experiment": exp_id, "variant": key,
                                "converged": sum(r.converged for r in records), "runs": len(records),
                                **{f"evaluations_{k}": v
                                   for k, v in quartiles([r.evaluations for r in records]).items()}})
            continue
        records = []
        for seed in seeds:
            record, result = run_detect(spec, seed, overrides, args.evaluator, "geometric", True, sensors,
                                        workers=args.workers)
            write_run(record, result, out / f"experiment_{exp_id}")
            records.append(record)
            log.info("experiment %s seed %d: %s", exp_id, seed, record.status)
        summary.append({"experiment": exp_id, "variant": "two_stage",
                        "converged": sum(r.converged for r in records), "runs": len(records),
                        **{f"wall_time_{k}": v for k, v in quartiles([r.wall_time for r in records]).items()},
                        **{f"evaluations_{k}": v for k, v in quartiles([r.evaluations for r in records]).items()}})
    name = "ablation_summary.csv" if args.ablation else "bench_summary.csv"
    _write_csv(out / name, summary)
    for row in summary:
        print(f"experiment {row['experiment']} {row['variant']}: {row['converged']}/{row['runs']} converged, "
              f"median evaluations {row['evaluations_median']:.0f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holocrack", description="Crack detection from strain sensors.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, evaluator_default="hnn"):
        p.add_argument("--experiment", choices=EXPERIMENT_IDS, default="I")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out-dir", default="runs")
        p.add_argument("--evaluator", choices=("hnn", "oracle"), default=evaluator_default)

    def ga_flags(p):
        p.add_argument("--epochs-long", type=int)
        p.add_argument("--epochs-short-cap", type=int)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--config", help="JSON file with GA parameter overrides")
        p.add_argument("--target", help="sensor JSON to use instead of generating one")

    p = sub.add_parser("generate-target", help="write synthetic sensor data")
    common(p)
    p.add_argument("--noise", type=float, default=0.0, help="noise std relative to rms strain")
    p.add_argument("--out", help="output path (default: <out-dir>/target_<id>.json)")
    p.set_defaults(func=cmd_generate_target)

    p = sub.add_parser("detect", help="run one crack detection")
    common(p)
    ga_flags(p)
    p.add_argument("--termination", choices=("geometric", "fitness"), default="geometric")
    p.add_argument("--single-stage", action="store_true", help="long-range search only")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("forward", help="solve the plate for one crack")
    common(p, "oracle")
    p.add_argument("--crack", type=float, nargs=4, metavar=("XP", "YP", "XM", "YM"))
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--grid", type=int, default=0, help="also dump an N x N field grid")
    p.add_argument("--load", type=float, help="override the edge traction magnitude")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("epoch-sweep", help="long-range generations versus training epochs")
    common(p)
    ga_flags(p)
    p.add_argument("--epochs", type=int, nargs="+", default=[50, 100, 200, 400, 800])
    p.add_argument("--seeds", type=int, default=3)
    p.set_defaults(func=cmd_epoch_sweep)

    p = sub.add_parser("bench", help="multi-seed detection suites")
    common(p)
    ga_flags(p)
    p.add_argument("--experiments", nargs="+", choices=EXPERIMENT_IDS, default=list(EXPERIMENT_IDS))
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--ablation", action="store_true", help="two-stage versus single-stage search")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

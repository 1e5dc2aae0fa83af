"""Command line entry point: ``ringrl train|ablate|aggregate|plot``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .harness import (ExperimentConfig, aggregate, effect_size, load_records, read_summary,
                      run_experiment, write_summary)
from .plotting import emit_curves

ABLATIONS = {
    "random-ring": ("Ring", "RingRandomMap"),
    "no-kernel": ("RnnRing", "RnnNoKernel"),
}


def _report(summary: dict, pairs=()):
    for variant, s in summary.items():
        print(f"{variant:14s} seeds={len(s['seeds']):3d}  AULC median={s['aulc_median']:10.3f}"
              f"  mean={s['aulc_mean']:10.3f}")
    for a, b in pairs:
        if a in summary and b in summary:
            eff = effect_size(summary[a]["aulc"], summary[b]["aulc"])
            print(f"{a} vs {b}: median diff {eff['median_diff']:+.3f}, "
                  f"Cohen's d {eff['cohens_d']:+.2f}")


def _run(config: ExperimentConfig, out: Path, pairs):
    records = run_experiment(config, out)
    failed = [r for r in records if r.status != "ok"]
    for r in failed:
        print(f"run {r.variant}/{r.seed} failed: {r.error}", file=sys.stderr)
    ok = [r for r in records if r.status == "ok"]
    if ok:
        summary = aggregate(ok)
        write_summary(summary, out / "summary.json")
        emit_curves(summary, out / "curves.csv")
        _report(summary, pairs)
    return 1 if failed else 0


def cmd_train(args) -> int:
    config = ExperimentConfig.load(args.config)
    exp = config.experiment
    if args.seeds is not None:
        exp = dataclasses.replace(exp, n_seeds=args.seeds)
    if args.variant is not None:
        exp = dataclasses.replace(exp, variants=[args.variant])
    if args.jobs is not None:
        exp = dataclasses.replace(exp, jobs=args.jobs)
    config = dataclasses.replace(config, experiment=exp)
    return _run(config, Path(args.out), [("Ring", "Baseline"), ("RingUA", "Ring")])


def cmd_ablate(args) -> int:
    config = ExperimentConfig.load(args.config)
    full, ablated = ABLATIONS[args.mode]
    exp = dataclasses.replace(config.experiment, variants=[full, ablated])
    if args.seeds is not None:
        exp = dataclasses.replace(exp, n_seeds=args.seeds)
    config = dataclasses.replace(config, experiment=exp)
    return _run(config, Path(args.out), [(full, ablated)])


def cmd_aggregate(args) -> int:
    summary = aggregate(load_records(args.inp))
    write_summary(summary, args.out)
    _report(summary)
    return 0


def cmd_plot(args) -> int:
    csv_path, svg_path = emit_curves(read_summary(args.inp), args.out)
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ringrl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run seeded training for one or more variants")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seeds", type=int)
    t.add_argument("--variant")
    t.add_argument("--jobs", type=int)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("ablate", help="compare a variant against its ablation")
    a.add_argument("--config", required=True)
    a.add_argument("--mode", required=True, choices=sorted(ABLATIONS))
    a.add_argument("--out", required=True)
    a.add_argument("--seeds", type=int)
    a.set_defaults(func=cmd_ablate)

    g = sub.add_parser("aggregate", help="summarise a run directory")
    g.add_argument("--in", dest="inp", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_aggregate)

    pl = sub.add_parser("plot", help="emit curve CSV and SVG from a summary")
    pl.add_argument("--in", dest="inp", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

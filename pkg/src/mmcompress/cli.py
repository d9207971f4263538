"""Command-line entry point: ``mmcompress {gen-data,run,plot,probe,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import armsim, config as configmod
from .nn import child_seed, stream
from .plots import emit_plots
from .readout import write_pgm
from .results import load_csv
from .runner import run_sweep
from .synthetic import SyntheticSpec, SyntheticWorld, dump_dataset


def _load_config(args) -> configmod.ExperimentConfig:
    cfg = (configmod.load(args.config) if args.config
           else configmod.ExperimentConfig(name="synthetic_je", kind="synthetic_je",
                                           sweep=configmod.DEFAULT_SYNTHETIC_SWEEP))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.is_robot:
        seed = child_seed(cfg.seed, "arm_dataset", 0)
        ds = armsim.generate_dataset(cfg.arm, cfg.dataset_size, seed)
        armsim.save_dataset(out / "arm_dataset.bin", ds)
        frames = out / "frames"
        frames.mkdir(exist_ok=True)
        for i in range(min(args.frames, len(ds))):
            write_pgm(frames / f"frame_{i:05d}.pgm", ds.images[i], vmin=-1.0, vmax=1.0)
        print(f"wrote {len(ds)} arm samples and {min(args.frames, len(ds))} frames to {out}")
    else:
        s = cfg.synthetic
        spec = SyntheticSpec(s.d_m, s.d_e, s.n, s.k, child_seed(cfg.seed, "world", 0))
        world = SyntheticWorld(spec)
        dump_dataset(out / "synthetic.bin", world, args.batches, cfg.schedule.batch_size,
                     stream(cfg.seed, "dump"))
        print(f"wrote {args.batches} batches of {cfg.schedule.batch_size} to {out}")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    configs = cfg.expand()
    out = Path(cfg.out)
    result = run_sweep(configs, out, jobs=args.jobs, resume=args.resume)
    emit_plots(result, out / "plots", {c.name: c for c in configs})
    _print_table(result)
    if result.failed:
        for c in result.failed:
            print(f"FAILED {c.experiment} d_z={c.d_z} rep={c.rep}: {c.status}", file=sys.stderr)
        return 1
    return 0


def _csv_path(args) -> Path:
    if args.csv:
        return Path(args.csv)
    return Path(_load_config(args).out) / "results.csv"


def cmd_plot(args) -> int:
    path = _csv_path(args)
    result = load_csv(path)
    configs = None
    if args.config:
        configs = {c.name: c for c in _load_config(args).expand()}
    written = emit_plots(result, args.plots or path.parent / "plots", configs)
    for p in written:
        print(p)
    return 0


def cmd_probe(args) -> int:
    from .probes import probe_information_contract

    cfg = _load_config(args)
    ds = armsim.generate_dataset(cfg.arm, cfg.dataset_size, child_seed(cfg.seed, "arm_dataset", 0))
    res = probe_information_contract(ds, cfg.schedule, stream(cfg.seed, "probe"),
                                     cfg.network.channels)
    for name, value in res.scores.items():
        print(f"{name:16s} {value:.4f}")
    for label, ok in (("a", res.clause_a), ("b", res.clause_b), ("c", res.clause_c)):
        print(f"clause ({label}): {'pass' if ok else 'FAIL'}")
    return 0 if res.passed else 1


def _print_table(result) -> None:
    for exp in result.experiments:
        aggs = result.aggregates(exp)
        if not aggs:
            continue
        metrics = [m for m in result.metric_names(exp)
                   if not m.endswith("_se") and m not in ("seconds",)]
        print(f"\n{exp}")
        print("  d_z  " + "  ".join(f"{m:>14s}" for m in metrics))
        for d_z, row in aggs.items():
            cells = "  ".join(f"{row[m].mean:7.4f}±{row[m].std:6.4f}" for m in metrics)
            print(f"  {d_z:3d}  {cells}")


def cmd_report(args) -> int:
    result = load_csv(_csv_path(args))
    _print_table(result)
    return 1 if result.failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmcompress",
                                     description="multimodal compression experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="override the output directory")

    p = sub.add_parser("gen-data", help="dump a synthetic or arm dataset")
    common(p)
    p.add_argument("--batches", type=int, default=10, help="synthetic batches to dump")
    p.add_argument("--frames", type=int, default=20, help="arm frames exported as PGM")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("run", help="run a sweep")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--resume", action="store_true", help="skip cells already in the CSV")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="redraw plots from a results CSV")
    common(p)
    p.add_argument("--csv", help="results CSV (default: <out>/results.csv)")
    p.add_argument("--plots", help="output directory for SVGs")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("probe", help="raw-modality probes of the arm dataset")
    common(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("report", help="print aggregate tables from a results CSV")
    common(p)
    p.add_argument("--csv", help="results CSV (default: <out>/results.csv)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (configmod.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

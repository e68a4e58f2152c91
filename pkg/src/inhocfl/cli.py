"""Command line: ``inhocfl run | compare | gen-data``."""

import argparse
import logging
import os
import sys

from . import datagen, report
from .federation import FederationAborted, build_datasets

MODE_ALIASES = {"in_hoc": "in_hoc", "post_hoc": "post_hoc_baseline",
                "post_hoc_baseline": "post_hoc_baseline"}
XAI_ALIASES = {"ig": "IG", "ixg": "InputXGrad", "shap": "ShapSampling"}


def _parser():
    p = argparse.ArgumentParser(prog="inhocfl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True, help="JSON config or a run's manifest.json")
    run.add_argument("--mode", choices=sorted(MODE_ALIASES))
    run.add_argument("--xai", choices=sorted(XAI_ALIASES))
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")

    cmp_ = sub.add_parser("compare", help="compare rounds.csv of several runs")
    cmp_.add_argument("run_dirs", nargs="+")
    cmp_.add_argument("--out", help="write the table here instead of stdout")

    gen = sub.add_parser("gen-data", help="dump the generated datasets as CSV")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", help="output directory (default: <output_dir>/data)")
    return p


def _load(path):
    try:
        return report.load_config(path)
    except FileNotFoundError:
        print(f"inhocfl: config file not found: {path}", file=sys.stderr)
    except report.ConfigError as exc:
        print(f"inhocfl: invalid config: {exc}", file=sys.stderr)
    return None


def _cmd_run(args):
    cfg = _load(args.config)
    if cfg is None:
        return 2
    overrides = {}
    if args.mode:
        overrides["mode"] = MODE_ALIASES[args.mode]
    if args.xai:
        overrides["xai_method"] = XAI_ALIASES[args.xai]
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out:
        overrides["output_dir"] = args.out
    try:
        cfg = cfg.replace(**overrides)
    except ValueError as exc:
        print(f"inhocfl: invalid config: {exc}", file=sys.stderr)
        return 2
    try:
        report.run_experiment(cfg)
    except FederationAborted as exc:
        print(f"inhocfl: run aborted: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"inhocfl: {exc}", file=sys.stderr)
        return 1
    print(cfg.output_dir)
    return 0


def _cmd_compare(args):
    try:
        rows, summary = report.compare_runs(args.run_dirs)
    except (report.SchemaError, ValueError, OSError) as exc:
        print(f"inhocfl: {exc}", file=sys.stderr)
        return 1
    text = report.comparison_csv(rows, summary)
    if args.out:
        report._atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_gen_data(args):
    cfg = _load(args.config)
    if cfg is None:
        return 2
    out = args.out or os.path.join(cfg.output_dir, "data")
    os.makedirs(out, exist_ok=True)
    fed = cfg.federation
    for n, s in enumerate(fed.slices):
        train, test = build_datasets(fed, n)
        for split, ds in (("train", train), ("test", test)):
            for d in ds:
                datagen.save_csv(d, os.path.join(out, f"{s}_cl{d.cl_id:03d}_{split}.csv"))
    print(out)
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return {"run": _cmd_run, "compare": _cmd_compare, "gen-data": _cmd_gen_data}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

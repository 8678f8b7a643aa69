"""``tapsense`` command line: one subcommand per pipeline stage.

Settings come from built-in defaults, then an optional JSON ``--config``
file, then command-line flags. ``SONIC_DATA_ROOT`` supplies the dataset
root when neither the file nor ``--root`` does.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import pipeline
from .pipeline import RunConfig, StageError

STAGES = ("simulate", "extract", "features", "train", "eval", "refine", "report")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its values")
    common.add_argument("--root", help="dataset root (default: $SONIC_DATA_ROOT)")
    common.add_argument("--out", help="output directory for models, reports and provenance")
    common.add_argument("--seed", type=int)
    common.add_argument("--task", choices=pipeline.TASKS)
    common.add_argument("--jobs", type=int, help="worker processes for per-object stages")
    common.add_argument("--epochs", type=int, help="override the training epoch count")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tapsense", description="Tap, listen and learn: the simulation and "
                                     "perception pipeline.")
    sub = parser.add_subparsers(dest="stage", required=True)
    sim = sub.add_parser("simulate", parents=[common], help="explore meshes and write a synthetic dataset")
    sim.add_argument("--meshes", help="directory of .obj/.ply meshes (default: random primitives)")
    sim.add_argument("--primitives", type=int, help="number of random primitives when no meshes are given")
    sim.add_argument("--max-taps", type=int, dest="max_taps", help="keep at most this many valid taps per object")
    sub.add_parser("extract", parents=[common], help="strike clips and Mel spectrograms")
    sub.add_parser("features", parents=[common], help="audio descriptors and separability")
    sub.add_parser("train", parents=[common], help="train the model for --task")
    ev = sub.add_parser("eval", parents=[common], help="evaluate a trained model with baselines")
    ev.add_argument("--baselines", choices=("all", "nn", "random", "none"))
    sub.add_parser("refine", parents=[common], help="smooth material predictions and compare F1")
    sub.add_parser("report", parents=[common], help="aggregate eval reports over seeds")
    return parser


def resolve_config(args) -> RunConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for key in ("root", "out", "seed", "task", "jobs", "epochs", "baselines", "meshes", "primitives", "max_taps"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if not data.get("root") and os.environ.get("SONIC_DATA_ROOT"):
        data["root"] = os.environ["SONIC_DATA_ROOT"]
    return RunConfig.from_dict(data)


def _print_rows(rows):
    print(f"{'task':<10}{'name':<24}{'n':>3}{'mean':>12}{'sd':>12}")
    for r in rows:
        print(f"{r['task']:<10}{r['name']:<24}{r['n']:>3}{r['mean']:>12.5f}{r['sd']:>12.5f}")


def run(args) -> int:
    cfg = resolve_config(args)
    if args.stage == "simulate":
        entries = pipeline.simulate(cfg)
        print(f"simulated {len(entries)} objects into {cfg.root}")
    elif args.stage == "extract":
        print(f"extracted {pipeline.extract(cfg)} spectrograms")
    elif args.stage == "features":
        print(json.dumps(pipeline.features(cfg)))
    elif args.stage == "train":
        print(json.dumps(pipeline.train_stage(cfg), default=str))
    elif args.stage == "eval":
        report = pipeline.eval_stage(cfg)
        for task, seed, name, value in report.rows():
            print(f"{task} seed {seed} {name} {value:.5f}")
    elif args.stage == "refine":
        s = pipeline.refine_stage(cfg)
        print(f"macro F1 before {s['before_f1']:.4f} after {s['after_f1']:.4f}")
    elif args.stage == "report":
        rows = pipeline.report_stage(cfg)
        if not rows:
            print(f"no reports in {cfg.out}")
        else:
            _print_rows(rows)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except (StageError, FileNotFoundError) as exc:
        print(f"tapsense {args.stage}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"tapsense {args.stage}: invalid configuration: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

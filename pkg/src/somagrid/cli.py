"""Command-line entry point.

Verbs:
  train      train one or more cohorts over seeds into an output directory
  assay      run the analysis battery over a directory of trained runs
  replicate  one-command pipeline: train everything, assay, evaluate gates
  inspect    dump a checkpoint's configuration and parameter statistics

Configuration precedence: defaults < --config file < SOMAGRID_SECTION__KEY
environment variables < explicit flags (--cohort, --seeds, --episodes,
--master-seed, --workers).

Exit codes: 0 success; 1 failed findings gate or integrity error; 2 bad
configuration or missing inputs; 3 training aborted on non-finite numbers.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from somagrid import __version__
from somagrid.checkpoint import CheckpointError
from somagrid.config import ConfigError, RunConfig, config_hash, effective_text, load_config
from somagrid.harness import (
    MissingInputError,
    assay_battery,
    inspect_checkpoint,
    read_manifest,
    replicate,
    train_battery,
)
from somagrid.trainer import TrainingAborted

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_NAN_ABORT = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="somagrid",
                                     description="reward-free embodied gridworld experiments")
    parser.add_argument("--version", action="version", version=f"somagrid {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="INI config file")
        p.add_argument("--cohort", action="append", default=None,
                       help="cohort name (repeatable or comma-separated)")
        p.add_argument("--seeds", help="seed list: 0..7 or 0,1,2")
        p.add_argument("--episodes", type=int, help="training episodes per run")
        p.add_argument("--master-seed", type=int, dest="master_seed")
        p.add_argument("--workers", type=int, help="parallel (cohort, seed) workers")

    p_train = sub.add_parser("train", help="train cohorts")
    common(p_train)
    p_train.add_argument("--out", required=True, help="output directory for runs")
    p_train.add_argument("--resume", action="store_true",
                         help="resume runs from their snapshots when present")

    p_assay = sub.add_parser("assay", help="run the assay battery over trained runs")
    common(p_assay)
    p_assay.add_argument("--runs", required=True, help="directory holding trained runs")
    p_assay.add_argument("--out", required=True, help="output directory for the report")

    p_rep = sub.add_parser("replicate", help="train, assay, and evaluate the findings gates")
    common(p_rep)
    p_rep.add_argument("--out", required=True, help="pipeline output directory")

    p_inspect = sub.add_parser("inspect", help="dump a checkpoint")
    p_inspect.add_argument("checkpoint", help="path to a checkpoint file")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: List[Tuple[str, str, str]] = []
    if getattr(args, "cohort", None):
        names = ",".join(args.cohort)
        overrides.append(("run", "cohorts", names))
    if getattr(args, "seeds", None):
        overrides.append(("run", "seeds", args.seeds))
    if getattr(args, "episodes", None) is not None:
        overrides.append(("training", "episodes", str(args.episodes)))
    if getattr(args, "master_seed", None) is not None:
        overrides.append(("run", "master_seed", str(args.master_seed)))
    if getattr(args, "workers", None) is not None:
        overrides.append(("run", "workers", str(args.workers)))
    return load_config(getattr(args, "config", None), overrides=overrides)


def _print_effective(cfg: RunConfig) -> None:
    print(f"# effective configuration (hash {config_hash(cfg)})")
    print(effective_text(cfg), end="")


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.verb == "inspect":
            print(inspect_checkpoint(Path(args.checkpoint)))
            return EXIT_OK
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except CheckpointError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT

    try:
        if args.verb == "train":
            _print_effective(cfg)
            train_battery(cfg, Path(args.out), resume=args.resume,
                          workers=getattr(args, "workers", None))
            print(f"trained {len(cfg.cohorts) * len(cfg.seeds)} runs into {args.out}")
            return EXIT_OK
        if args.verb == "assay":
            runs_dir = Path(args.runs)
            manifest = read_manifest(runs_dir / "manifest.json")
            if args.config is None:
                from somagrid.config import config_from_text

                cfg = config_from_text(manifest["config_text"])
            elif config_hash(cfg) != manifest["config_hash"]:
                print("error: --config does not match the trained runs' configuration",
                      file=sys.stderr)
                return EXIT_BAD_INPUT
            # the cohort comparisons need the full three-cohort battery
            from somagrid.config import COHORT_NAMES

            cfg.cohorts = list(COHORT_NAMES)
            summary = assay_battery(runs_dir, Path(args.out), cfg)
            print(f"assayed {summary['n_rows']} runs into {args.out}")
            return EXIT_OK
        if args.verb == "replicate":
            _print_effective(cfg)
            code, criteria = replicate(cfg, Path(args.out), workers=getattr(args, "workers", None))
            for c in criteria:
                print(f"{c['status']:7s} {c['id']}: {c['detail']}")
            return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except CheckpointError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except TrainingAborted as exc:
        print(f"training aborted on non-finite numbers: {exc}", file=sys.stderr)
        return EXIT_NAN_ABORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry points.

Every subcommand operates on a run directory; ``pipeline`` chains them all.
Exit codes: 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .pipeline import (PipelineError, RunPaths, apposition_stage, augment_stage,
                       cartesian_stage, eval_stage, infer_stage, load_config,
                       run_pipeline, style_train_stage, synth_stage, train_stage)
from .train import NumericalError
from .volume import (CARTESIAN, POLAR, VolumeFormatError, VoxelSpacing,
                     ingest_png_stack, save_volume)

USAGE_ERROR = 1
DATA_ERROR = 2
NUMERICAL_ERROR = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _add_run_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, default=None,
                     help="YAML run configuration (defaults apply otherwise)")
    sub.add_argument("--run-dir", type=Path, required=True)
    sub.add_argument("--seed", type=int, default=None,
                     help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stentmap",
                     description="Synthetic IV-OCT pullbacks, strut/lumen "
                                 "segmentation, and color-coded apposition maps")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
            ("synth", "generate phantom pullbacks into the run directory"),
            ("augment", "window-shift the training pullbacks"),
            ("train", "round-1 training for both targets"),
            ("style-train", "dual-layer round-2 training for the stent model"),
            ("infer", "segment the held-out pullbacks"),
            ("eval", "strut- and voxel-level metrics report"),
            ("dcca", "distance-color-coded apposition exports"),
            ("pipeline", "run every stage in order")):
        sub = subs.add_parser(name, help=help_text)
        _add_run_args(sub)

    ingest = subs.add_parser("ingest", help="convert a PNG frame stack to a "
                                            "volume container")
    ingest.add_argument("--frames-dir", type=Path, required=True)
    ingest.add_argument("--out", type=Path, required=True)
    ingest.add_argument("--spacing-um", type=float, nargs=3, required=True,
                        metavar=("DX", "DY", "DZ"))
    ingest.add_argument("--polar", action="store_true",
                        help="frames are polar (samples x A-lines)")
    return parser


def _config_from_args(args) -> dict:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        if args.command == "ingest":
            volume = ingest_png_stack(args.frames_dir,
                                      VoxelSpacing(*args.spacing_um),
                                      POLAR if args.polar else CARTESIAN)
            save_volume(volume, args.out)
            return 0

        config = _config_from_args(args)
        paths = RunPaths(args.run_dir)
        if args.command == "synth":
            synth_stage(config, paths)
        elif args.command == "augment":
            augment_stage(config, paths)
        elif args.command == "train":
            cartesian_stage(config, paths)
            for target in ("stent", "lumen"):
                train_stage(config, paths, target)
        elif args.command == "style-train":
            style_train_stage(config, paths)
        elif args.command == "infer":
            infer_stage(config, paths)
        elif args.command == "eval":
            eval_stage(config, paths)
        elif args.command == "dcca":
            apposition_stage(config, paths)
        elif args.command == "pipeline":
            run_pipeline(config, args.run_dir)
        return 0
    except (PipelineError, VolumeFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    raise SystemExit(main())

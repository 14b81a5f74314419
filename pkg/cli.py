#!/usr/bin/env python3
"""
HSI Denoise Command Line

Subcommands:
    gen         generate a synthetic scene cube
    train       train a model and write checkpoint, log, split and map
    eval        score a checkpoint on the test or train pixels
    map         render a classification or ground-truth map
    check-grad  run the finite-difference gradient suites
    ablate      sweep base-noise count or neighbor size over several seeds
    accept      multi-seed acceptance runs on synthetic scenes

Every RunConfig option is available as a --kebab-case flag. Flags override
a --config file, which overrides HSI_DENOISE_* environment variables.
Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import argparse
import logging
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, get_args

from config import FIELDS, ConfigError, RunConfig, load_run_config
from models import load_checkpoint
from scenes import generate_scene, load_cube, make_scene_spec, save_cube, split_train_test
from workflows import (
    AblationKind,
    AcceptanceRunner,
    GradientCheckRunner,
    check_compatible,
    evaluate,
    format_acceptance,
    format_report,
    predict_map,
    render_map,
    run_ablation,
    run_training,
    write_ablation_csv,
)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class UsageError(Exception):
    """Custom exception for malformed command lines"""
    pass


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad input."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _flag_kwargs(annotation: Any, description: str) -> Dict[str, Any]:
    choices = [a for a in get_args(annotation) if a is not type(None)]
    base = choices[0] if choices else annotation
    if base is bool:
        return {"action": argparse.BooleanOptionalAction, "default": None, "help": description}
    if isinstance(base, type) and issubclass(base, Enum):
        return {"choices": [member.value for member in base], "default": None, "help": description}
    return {"type": base, "default": None, "help": description}


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("run options")
    for name, info in RunConfig.model_fields.items():
        group.add_argument(f"--{name.replace('_', '-')}", dest=name,
                           **_flag_kwargs(info.annotation, info.description or name))
    parser.add_argument("--config", dest="config_file", help="File of `key = value` lines")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="Warnings only")


def build_parser() -> CliParser:
    parser = CliParser(prog="hsi-denoise",
                       description="Noise-space denoising classifier for hyperspectral scenes")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    gen_parser = subparsers.add_parser("gen", help="Generate a synthetic scene cube")
    add_config_flags(gen_parser)

    train_parser = subparsers.add_parser("train", help="Train a model on a cube")
    add_config_flags(train_parser)
    train_parser.add_argument("--no-map", action="store_true", help="Skip rendering the final map")

    eval_parser = subparsers.add_parser("eval", help="Evaluate a checkpoint")
    add_config_flags(eval_parser)
    eval_parser.add_argument("--split", choices=["test", "train"], default="test", help="Pixels to score")

    map_parser = subparsers.add_parser("map", help="Render a classification map")
    add_config_flags(map_parser)
    map_parser.add_argument("--truth", action="store_true", help="Render ground-truth labels instead")
    map_parser.add_argument("--output", help="PPM path (default: <output-dir>/map.ppm)")

    grad_parser = subparsers.add_parser("check-grad", help="Run the gradient suites")
    add_config_flags(grad_parser)

    ablate_parser = subparsers.add_parser("ablate", help="Sweep base noises or neighbor size")
    add_config_flags(ablate_parser)
    ablate_parser.add_argument("--kind", choices=[kind.value for kind in AblationKind],
                               default=AblationKind.BASE_NOISE.value, help="Option to sweep")
    ablate_parser.add_argument("--values", type=int, nargs="+", help="Swept values")
    ablate_parser.add_argument("--seeds", type=int, default=3, help="Repetitions per setting")
    ablate_parser.add_argument("--output", help="CSV path (default: <output-dir>/ablation_<kind>.csv)")

    accept_parser = subparsers.add_parser("accept", help="Run the multi-seed acceptance checks")
    add_config_flags(accept_parser)
    accept_parser.add_argument("--seeds", type=int, default=3, help="Training seeds per check")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {name: getattr(args, name) for name in FIELDS if getattr(args, name, None) is not None}
    return load_run_config(overrides, args.config_file)


def cmd_gen(args, config: RunConfig) -> int:
    spec = make_scene_spec(num_classes=config.classes, bands=config.bands, rows=config.rows, cols=config.cols,
                           num_true_bases=config.true_bases, noise_amplitude=config.noise_amplitude,
                           white_noise_sigma=config.white_noise_sigma, region_size=config.region_size,
                           seed=config.seed)
    path = save_cube(generate_scene(spec), config.cube)
    print(f"✅ Scene written to {path} ({spec.bands} bands, {spec.rows}×{spec.cols}, {spec.num_classes} classes)")
    return 0


def cmd_train(args, config: RunConfig) -> int:
    result = run_training(config, load_cube(config.cube), render=not args.no_map)
    print(f"✅ Trained {config.epochs} epochs: final OA {result.final_oa:.4f}")
    print(f"   checkpoint: {result.checkpoint_path}")
    print(f"   log:        {result.log_path}")
    return 0


def cmd_eval(args, config: RunConfig) -> int:
    state = load_checkpoint(config.checkpoint)
    cube = load_cube(config.cube)
    check_compatible(state, cube)
    # same seed, same split as the training run
    split = split_train_test(cube, config.per_class, config.seed)
    coords = split.test if args.split == "test" else split.train
    report = evaluate(state, cube, coords, state.dims.window, config.baseline)
    print(f"✅ {args.split}: {report.summary()}")
    for m, acc in enumerate(report.per_class, start=1):
        print(f"   class {m}: {'absent' if acc is None else f'{acc:.4f}'}")
    return 0


def cmd_map(args, config: RunConfig) -> int:
    cube = load_cube(config.cube)
    if args.truth:
        labels = cube.labels
    else:
        state = load_checkpoint(config.checkpoint)
        check_compatible(state, cube)
        labels = predict_map(state, cube, config.baseline)
    path = render_map(labels, args.output or Path(config.output_dir) / "map.ppm")
    print(f"✅ Map written to {path}")
    return 0


def cmd_check_grad(args, config: RunConfig) -> int:
    results = GradientCheckRunner(seed=config.seed).run()
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 2


def cmd_ablate(args, config: RunConfig) -> int:
    kind = AblationKind(args.kind)
    if args.seeds < 1:
        raise UsageError(f"--seeds must be at least 1, got {args.seeds}")
    seeds = [config.seed + i for i in range(args.seeds)]
    rows = run_ablation(kind, load_cube(config.cube), config, values=args.values, seeds=seeds)
    path = write_ablation_csv(rows, args.output or Path(config.output_dir) / f"ablation_{kind.value}.csv")
    for row in rows:
        s = row.summary
        print(f"   {kind.value}={row.value:<4} {row.model:<8} OA {s.oa_mean:.4f}±{s.oa_std:.4f} "
              f"AA {s.aa_mean:.4f}±{s.aa_std:.4f} Kappa {s.kappa_mean:.4f}±{s.kappa_std:.4f}")
    print(f"✅ Ablation table written to {path}")
    return 0


def cmd_accept(args, config: RunConfig) -> int:
    if args.seeds < 1:
        raise UsageError(f"--seeds must be at least 1, got {args.seeds}")
    # scene seed stays config.seed; training seeds count up from it
    results = AcceptanceRunner(config, seeds=[config.seed + i for i in range(args.seeds)]).run()
    print(format_acceptance(results))
    return 0 if all(r.passed for r in results) else 2


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "map": cmd_map,
    "check-grad": cmd_check_grad,
    "ablate": cmd_ablate,
    "accept": cmd_accept,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)

    try:
        config = resolve_config(args)
        return COMMANDS[args.command](args, config)
    except (ConfigError, UsageError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("\n❌ Interrupted", file=sys.stderr)
        return 130
    except Exception as e:
        logging.getLogger(__name__).debug("Command failed", exc_info=True)
        print(f"❌ {args.command} failed: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

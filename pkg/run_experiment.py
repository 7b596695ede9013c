#!/usr/bin/env python3
"""
CLAST - Experiment Runner

Command-line entry point for the toy text/image-conditioned style transfer
pipeline.

Usage:
    # Full toy pipeline
    python run_experiment.py --config configs/toy.env build-dataset
    python run_experiment.py --config configs/toy.env train --stage 1
    python run_experiment.py --config configs/toy.env train --stage 2
    python run_experiment.py --config configs/toy.env eval

    # Single image
    python run_experiment.py stylize --content in.png --text style-1 --out out.png

    # Checks and measurements
    python run_experiment.py gradcheck
    python run_experiment.py bench-fusion --lengths 256,1024,4096

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import argparse
import os
import sys
from typing import List, Optional

# Add project root to path
PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, PROJECT_ROOT)


def load_env():
    """Load local CLAST_<KEY> overrides from clast.env, without replacing the real environment."""
    env_file = os.path.join(PROJECT_ROOT, "clast.env")
    if os.path.exists(env_file):
        from dotenv import load_dotenv
        load_dotenv(env_file, override=False)


from clast import ClastExperiment
from errors import ClastError, ConfigurationError, StyleLookupError, UsageError
from losses import ABLATION_PRESETS
from model import FusionTag
from settings import error_console, load_settings, parse_assignments


EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with status 2 on bad usage."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--config", default=argparse.SUPPRESS, help="KEY=value config file (e.g. configs/toy.env)")
    flags.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Run seed")
    flags.add_argument("--deterministic", action="store_true", default=argparse.SUPPRESS,
                       help="Sequential execution; identical artifacts for identical seeds")
    flags.add_argument("--run-dir", default=argparse.SUPPRESS, help="Output directory of this run")
    flags.add_argument("--dataset-dir", default=argparse.SUPPRESS, help="Dataset directory")
    flags.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                       help="Override any config key (repeatable)")
    flags.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="No progress output")
    return flags


def build_parser() -> ArgumentParser:
    common = _global_flags()
    parser = ArgumentParser(
        prog="clast",
        description="CLAST - text/image-conditioned style transfer (toy reproduction)",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
        epilog="""
Examples:
  python run_experiment.py --config configs/toy.env build-dataset
  python run_experiment.py --seed 3 --deterministic train --stage 1
  python run_experiment.py stylize --content in.png --style-image painting.png --out out.png
  python run_experiment.py bench-fusion --variants ssm_adaln,attn_adain
        """,
    )
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=ArgumentParser)

    build = sub.add_parser("build-dataset", parents=[common], help="Render the synthetic dataset and calibrate anchors")
    build.add_argument("--classes", type=int, help="Number of style classes C")
    build.add_argument("--paintings", type=int, help="Paintings per class K")
    build.add_argument("--contents", type=int, help="Content images M")
    build.add_argument("--size", type=int, help="Image side in pixels")

    train = sub.add_parser("train", parents=[common], help="Run a training stage")
    train.add_argument("--stage", type=int, choices=[1, 2], required=True)
    train.add_argument("--iterations", type=int, help="Optimizer steps for this stage")
    train.add_argument("--variant", choices=[t.value for t in FusionTag], help="Fusion variant (stage 2)")

    stylize = sub.add_parser("stylize", parents=[common], help="Stylize one PNG")
    stylize.add_argument("--content", required=True, help="Content PNG")
    style = stylize.add_mutually_exclusive_group(required=True)
    style.add_argument("--text", help="Style class label, e.g. style-1")
    style.add_argument("--style-image", help="Style PNG")
    stylize.add_argument("--out", required=True, help="Output PNG")

    sub.add_parser("eval", parents=[common], help="Score held-out stylizations; writes eval.json")
    sub.add_parser("analyze-correlation", parents=[common], help="Painting-to-class score matrix; writes correlation.csv")

    bench = sub.add_parser("bench-fusion", parents=[common], help="Time fusion variants; writes bench.json")
    bench.add_argument("--lengths", help="Comma-separated sequence lengths")
    bench.add_argument("--variants", help="Comma-separated fusion variants")
    bench.add_argument("--repeats", type=int, help="Timed repeats per length (>= 20)")

    grad = sub.add_parser("gradcheck", parents=[common], help="Finite-difference gradient checks")
    grad.add_argument("--ops", help="Comma-separated case names (default: all)")
    grad.add_argument("--instances", type=int, default=20, help="Random instances per case")

    ablate = sub.add_parser("ablate", parents=[common], help="Stage 2 once per loss preset; writes ablation.json")
    ablate.add_argument("--presets", default="baseline,clip,clip_supcon",
                        help=f"Comma-separated presets from: {', '.join(ABLATION_PRESETS)}")

    sub.add_parser("plot", parents=[common], help="Plot everything found in the run directory")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    """CLI values that map onto config keys; None means not given."""
    values = parse_assignments(getattr(args, "set", None))
    flags = {
        "seed": getattr(args, "seed", None),
        "deterministic": True if getattr(args, "deterministic", False) else None,
        "run_dir": getattr(args, "run_dir", None),
        "dataset_dir": getattr(args, "dataset_dir", None),
        "verbose": False if getattr(args, "quiet", False) else None,
        "num_classes": getattr(args, "classes", None),
        "paintings_per_class": getattr(args, "paintings", None),
        "num_contents": getattr(args, "contents", None),
        "image_size": getattr(args, "size", None),
        "fusion_variant": getattr(args, "variant", None),
        "bench_lengths": getattr(args, "lengths", None),
        "bench_variants": getattr(args, "variants", None),
        "bench_repeats": getattr(args, "repeats", None),
    }
    if getattr(args, "iterations", None) is not None:
        flags["stage1_iterations" if args.stage == 1 else "stage2_iterations"] = args.iterations
    values.update({k: v for k, v in flags.items() if v is not None})
    return values


def _split(text: Optional[str]) -> List[str]:
    return [item.strip() for item in (text or "").split(",") if item.strip()]


def run_command(args: argparse.Namespace) -> int:
    settings = load_settings(getattr(args, "config", None), _overrides(args))
    experiment = ClastExperiment(settings)
    command = args.command

    if command == "build-dataset":
        experiment.build_dataset()
    elif command == "train":
        experiment.train(args.stage)
    elif command == "stylize":
        experiment.stylize_file(args.content, args.out, text=args.text, style_png=args.style_image)
    elif command == "eval":
        experiment.evaluate()
    elif command == "analyze-correlation":
        experiment.analyze_correlation()
    elif command == "bench-fusion":
        experiment.benchmark()
    elif command == "gradcheck":
        results = experiment.gradcheck(_split(args.ops) or None, instances=args.instances)
        failed = [r.name for r in results if not r.passed]
        if failed:
            error_console.print(f"[red]gradient check failed:[/] {', '.join(failed)}")
            return EXIT_FAILURE
    elif command == "ablate":
        experiment.ablate(_split(args.presets))
    elif command == "plot":
        from visualize import plot_run
        plot_run(experiment.run_dir)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Parse `argv`, run one subcommand and return its exit code."""
    load_env()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_USAGE
        return run_command(args)
    except SystemExit as exc:
        # --help and --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (UsageError, ConfigurationError, StyleLookupError) as exc:
        error_console.print(f"[red]error:[/] {exc}")
        return EXIT_USAGE
    except ClastError as exc:
        error_console.print(f"[red]failed:[/] {exc}")
        return EXIT_FAILURE
    except (OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        error_console.print(f"[red]failed:[/] {type(exc).__name__}: {exc}")
        return EXIT_FAILURE


cli = main


if __name__ == "__main__":
    sys.exit(main())

"""
Command-line entry point for the CASO lab.

    python -m src.cli gen-data --config src/config/config.yaml --out runs/demo
    python -m src.cli train-denoiser --out runs/demo
    python -m src.cli train-classifier --out runs/demo
    python -m src.cli learn-embedding --out runs/demo
    python -m src.cli edit --out runs/demo
    python -m src.cli diagnose --out runs/demo

Exit codes: 0 success, 1 error (bad input or config key, missing or tampered artifact,
divergence), 2 finished but a reported metric is NaN.
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

from src.config.loader import load_config
from src.errors import ArtifactError, ContainerFormatError, DivergenceError, FingerprintError, ShapeError
from src.pipeline.commands import (
    cmd_diagnose,
    cmd_edit,
    cmd_gen_data,
    cmd_learn_embedding,
    cmd_train_classifier,
    cmd_train_denoiser,
)

logger = logging.getLogger("src.cli")

COMMANDS = {
    "gen-data": (cmd_gen_data, "Generate the synthetic dataset and its train/held-out split"),
    "train-denoiser": (cmd_train_denoiser, "Train the codec and the class-conditional denoiser"),
    "train-classifier": (cmd_train_classifier, "Train one attribute classifier per attribute"),
    "learn-embedding": (cmd_learn_embedding, "Optimise semantic embeddings against frozen models"),
    "edit": (cmd_edit, "Edit held-out images with learned embeddings"),
    "diagnose": (cmd_diagnose, "Neural-collapse and Jensen-gap diagnostics"),
}

HANDLED = (
    ArtifactError,
    ContainerFormatError,
    DivergenceError,
    FingerprintError,
    ShapeError,
    FileNotFoundError,
    KeyError,
    ValueError,
    RuntimeError,
    AssertionError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="CASO desk-scale diffusion editing lab")
    sub = parser.add_subparsers(dest="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None, help="YAML config merged over the defaults")
        p.add_argument("--seed", type=int, default=None, help="Override the config seed")
        p.add_argument("--out", type=str, default=None, help="Run directory (overrides paths.out_dir)")
        p.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 1

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )
    command, _ = COMMANDS[args.command]
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        manifest = command(cfg)
    except HANDLED as e:
        logger.error(f"{args.command} failed: {e}")
        return 1

    nan_metrics = manifest.nan_metrics()
    if nan_metrics:
        logger.warning(f"{args.command} finished with NaN metrics: {', '.join(nan_metrics)}")
        return 2
    logger.info(f"{args.command} done: {manifest.stage_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: glfm infer | complete | explore."""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from glfm.commands import complete, explore, infer
from glfm.config import configure_logging, load_overrides, missing_sentinel_default
from glfm.exceptions import EXIT_RUNTIME, EXIT_USAGE, ConfigError, GLFMError
from glfm.schemas import Hyperparams, RunConfig

logger = logging.getLogger(__name__)

COMMANDS = {
    "infer": infer.run,
    "complete": complete.run,
    "explore": explore.run,
}

# flag -> Hyperparams field
HYPERPARAM_FLAGS = {
    "alpha": "alpha",
    "sigma_b2": "sigma_B2",
    "sigma_y2": "sigma_y2",
    "sigma_u2": "sigma_u2",
    "sigma_theta2": "sigma_theta2",
    "beta1": "beta1",
    "beta2": "beta2",
    "kmax": "K_max",
    "kinit": "K_init",
    "bias": "bias",
    "sample_variance": "sample_variance",
    "iters": "iterations",
    "burn_in": "burn_in",
    "seed": "seed",
    "birth": "birth",
    "keep_last": "keep_last",
}


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("input", type=Path, help="CSV table with a header row")
    parser.add_argument("--spec", type=Path, required=True, help="attribute spec file (name,kind[,R][,preprocess])")
    parser.add_argument("-o", "--output", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--config", type=Path, help="dotenv file of GLFM_* settings")
    parser.add_argument("--missing", default=None, help="text marking a missing cell (default: empty)")
    parser.add_argument("--chains", type=int, default=1, help="independent chains; the best final log joint is kept")
    parser.add_argument("--pin-label", dest="pin_label", help="pin rows whose discrete cells all equal this label")
    parser.add_argument("--no-fit-transform", dest="fit_transform", action="store_false",
                        help="keep w=1, mu=0 instead of fitting them to the data")
    parser.add_argument("--progress", action="store_true", help="show a progress bar")
    parser.add_argument("-v", "--verbose", action="count", default=0)

    hp = parser.add_argument_group("hyperparameters")
    hp.add_argument("--alpha", type=float)
    hp.add_argument("--sigma-b2", dest="sigma_b2", type=float)
    hp.add_argument("--sigma-y2", dest="sigma_y2", type=float)
    hp.add_argument("--sigma-u2", dest="sigma_u2", type=float)
    hp.add_argument("--sigma-theta2", dest="sigma_theta2", type=float)
    hp.add_argument("--beta1", type=float)
    hp.add_argument("--beta2", type=float)
    hp.add_argument("--kmax", type=int)
    hp.add_argument("--kinit", type=int)
    hp.add_argument("--bias", action="store_true", default=None)
    hp.add_argument("--sample-variance", dest="sample_variance", action="store_true", default=None)
    hp.add_argument("--iters", type=int)
    hp.add_argument("--burn-in", dest="burn_in", type=int)
    hp.add_argument("--seed", type=int)
    hp.add_argument("--birth", choices=["posterior", "prior"])
    hp.add_argument("--keep-last", dest="keep_last", type=int, help="post burn-in states averaged when scoring")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glfm", description="General latent feature model for heterogeneous tables")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_infer = sub.add_parser("infer", help="learn the latent features")
    _add_common_arguments(p_infer)
    p_infer.add_argument("--state", type=Path, help="saved state.json to resume; --iters is the total sweep count")

    p_complete = sub.add_parser("complete", help="impute missing cells")
    _add_common_arguments(p_complete)
    p_complete.add_argument("--heldout", type=float, help="benchmark mode: fraction of observed cells to hide")
    p_complete.add_argument("--splits", type=int, default=1, help="number of random held-out splits")

    p_explore = sub.add_parser("explore", help="feature patterns and per-pattern distributions")
    _add_common_arguments(p_explore)
    p_explore.add_argument("--top", type=int, default=10, help="number of patterns to report")
    p_explore.add_argument("--state", type=Path, help="saved state.json; skips inference")
    p_explore.add_argument("--grid-points", dest="grid_points", type=int, default=200)
    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    values = load_overrides(args.config)
    for flag, field in HYPERPARAM_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            values[field] = value
    hp = Hyperparams(**values)
    if hp.alpha <= 0:
        raise ConfigError("--alpha must be positive")

    return RunConfig(
        subcommand=args.subcommand,
        input_path=args.input,
        spec_path=args.spec,
        output_dir=args.output,
        hp=hp,
        heldout_fraction=getattr(args, "heldout", None),
        splits=getattr(args, "splits", 1),
        missing_sentinel=args.missing if args.missing is not None else missing_sentinel_default(),
        chains=args.chains,
        top_k=getattr(args, "top", 10),
        state_path=getattr(args, "state", None),
        fit_transform=args.fit_transform,
        pin_label=args.pin_label,
        grid_points=getattr(args, "grid_points", 200),
        progress=args.progress,
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        config = build_config(args)
        return COMMANDS[config.subcommand](config)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        print(f"error: {where}: {first['msg']}" if where else f"error: {first['msg']}", file=sys.stderr)
        return EXIT_USAGE
    except GLFMError as e:
        print(f"error: {e.detail}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

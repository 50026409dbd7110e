"""Command line entry point: ``hsc-sim <command> [options]``."""

import argparse
import logging
import sys
import typing

from .errors import HscError
from .hsc_config import SCENARIOS, load_config
from .wrapper import VARIANTS, HscWrapper

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit code 1)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hsc-sim", description="Hybrid semantic communication simulator"
    )
    parser.add_argument("--config", help="key = value config file, see docs/config.md")
    parser.add_argument("--seed", type=int, help="seed for training and channel draws")
    parser.add_argument("--out", help="output directory for CSVs and images")
    parser.add_argument("--d", type=int, help="CR rank")
    parser.add_argument("--snr", type=float, nargs="+", help="SNR in dB, several values form a grid")
    parser.add_argument("--k", type=int, help="SR length in complex symbols")
    parser.add_argument("--channel", choices=("error_free", "awgn", "fading"))
    parser.add_argument("--checkpoint-dir", help="directory holding trained models")
    parser.add_argument("--workers", type=int, help="sweep worker threads")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug detail")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="train transceivers over the error-free channel")
    train.add_argument("--variant", choices=VARIANTS, default="vae")
    commands.add_parser("finetune", help="few-shot fine-tuning under fading")
    commands.add_parser("train-adapters", help="train NCR adapters for each CR rank")
    sweep = commands.add_parser("sweep", help="run an experiment and write its CSV")
    sweep.add_argument("scenario", choices=SCENARIOS)
    commands.add_parser("dump", help="write example images")
    verify = commands.add_parser("verify", help="run the oracle suite")
    verify.add_argument("--fast", action="store_true", help="smaller trial counts")
    return parser


def overrides_from_args(args: argparse.Namespace) -> typing.Dict[str, typing.Any]:
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "d": args.d,
        "snr_db": args.snr,
        "k": args.k,
        "channel": args.channel,
        "checkpoint_dir": args.checkpoint_dir,
        "workers": args.workers,
    }
    if args.command == "sweep":
        overrides["scenario"] = args.scenario
    return overrides


def run(wrapper: HscWrapper, args: argparse.Namespace) -> typing.Tuple[bool, str]:
    if args.command == "train":
        ks = [args.k] if args.k is not None else None
        return wrapper.train(args.variant, ks)
    if args.command == "finetune":
        return wrapper.finetune()
    if args.command == "train-adapters":
        return wrapper.train_adapters()
    if args.command == "sweep":
        return wrapper.sweep()
    if args.command == "dump":
        return wrapper.dump()
    return wrapper.verify(args.fast)


def main(argv: typing.Optional[typing.Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    logger = logging.getLogger("hsc_sim")
    try:
        config = load_config(args.config, overrides_from_args(args))
    except HscError as e:
        logger.error("%s", e)
        return e.exit_code
    wrapper = HscWrapper(logger, config)
    success, message = run(wrapper, args)
    if success:
        logger.info(message)
    return wrapper.exit_code


if __name__ == "__main__":
    sys.exit(main())

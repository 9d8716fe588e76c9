"""
Dreammap command line interface.

    dreammap synth --scale 1 --train 3 --eval 1 --seed 7 --out data
    dreammap train --out data --epochs 50
    dreammap run --out data --budget 20
    dreammap sweep --scales 1,2,4 --budgets 20 --out sweep
    dreammap eval --estimate data/world_model.remap --pair data/pair003.json

Every option can also be given in a `--config` file as `option_name = value`; options on
the command line win. Exit codes: 0 success, 1 usage or configuration error, 2 data or
I/O error, 3 numerical failure.
"""


import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .dreamer import AcquisitionConfig, SelectionRule
from .errors import ConfigError, DataError, NumericalError, UsageError
from .gp import fit_kernel
from .harness import DEFAULT_BUDGETS, ExperimentSpec, run_methods, run_sweep, score_estimate
from .mapio import load_map, load_pair
from .methods import METHOD_ORDER
from .resample import SCALE_FACTORS
from .synth import SynthConfig, ingest_pair, load_dataset, make_dataset, write_dataset
from .world_model import TrainConfig, TrainingDivergedError, load_model, save_model, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

MODEL_FILE = "model.dmwm"
LOSS_TRACE_FILE = "loss_trace.csv"

SYNTH_OPTIONS = (
    ("base_h", int),
    ("base_w", int),
    ("tx_ref_dbm", float),
    ("path_loss_exp", float),
    ("shadowing_sigma_dbm", float),
    ("correlation_len_cells", float),
    ("n_occupants", int),
    ("occupant_atten_db", float),
    ("occupant_radius_cells", float),
)
TRAIN_OPTIONS = (
    ("learning_rate", float),
    ("kl_weight", float),
    ("epochs", int),
    ("episodes_per_epoch", int),
    ("max_sequence_len", int),
    ("batch_size", int),
    ("holdout_budget", int),
)
ACQUISITION_OPTIONS = (
    ("pool_size", int),
    ("dream_samples", int),
)


class CliArgumentParser(argparse.ArgumentParser):
    """Argument parser raising `UsageError` instead of exiting."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _list_of(kind):
    def convert(text):
        try:
            values = tuple(kind(part.strip()) for part in text.split(",") if part.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}") from None
        if not values:
            raise argparse.ArgumentTypeError("empty list")

        return values

    convert.__name__ = f"{kind.__name__} list"

    return convert


def scale_factor(text):
    try:
        value = int(text)
    except ValueError:
        value = None
    if value not in SCALE_FACTORS:
        raise argparse.ArgumentTypeError(f"scale must be one of {SCALE_FACTORS}, got {text!r}")

    return value


def scale_list(text):
    return tuple(scale_factor(part) for part in _list_of(str)(text))


def method_list(text):
    methods = _list_of(str)(text)
    unknown = [m for m in methods if m not in METHOD_ORDER]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown methods {unknown}, expected some of {METHOD_ORDER}")

    return methods


def _add_options(parser, options):
    for name, kind in options:
        parser.add_argument("--" + name.replace("_", "-"), type=kind, default=None, dest=name)


def _overrides(args, options):
    return {name: getattr(args, name) for name, _ in options if getattr(args, name) is not None}


def build_parser():
    common = CliArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root random seed (default 0)")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("--config", default=None, help="flat key = value config file")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="warnings and errors only")

    parser = CliArgumentParser(prog="dreammap", description="Radio map reconstruction by dreaming measurements.")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    synth = commands.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    synth.add_argument("--scale", type=scale_factor, default=1, help=f"upscaling factor, one of {SCALE_FACTORS}")
    synth.add_argument("--train", type=int, default=3, dest="n_train", help="training pairs (default 3)")
    synth.add_argument("--eval", type=int, default=1, dest="n_eval", help="evaluation pairs (default 1)")
    synth.add_argument("--ap-location", type=_list_of(float), default=None, help="access point row,col")
    synth.add_argument("--ingest-empty", default=None, help="dBm REMAP of a measured empty environment")
    synth.add_argument("--ingest-occupied", default=None, help="dBm REMAP of the same environment occupied")
    _add_options(synth, SYNTH_OPTIONS)
    synth.set_defaults(handler=cmd_synth)

    trainer = commands.add_parser("train", parents=[common], help="train a world model on a dataset")
    trainer.add_argument("--dataset", default=None, help="dataset directory (default: --out)")
    _add_options(trainer, TRAIN_OPTIONS)
    trainer.set_defaults(handler=cmd_train)

    runner = commands.add_parser("run", parents=[common], help="reconstruct one evaluation pair")
    runner.add_argument("--dataset", default=None, help="dataset directory (default: --out)")
    runner.add_argument("--model", default=None, help=f"model file (default: --out/{MODEL_FILE})")
    runner.add_argument("--scale", type=scale_factor, default=None, help="expected dataset scale")
    runner.add_argument("--pair-index", type=int, default=0, help="evaluation pair to reconstruct")
    runner.add_argument("--budget", type=int, default=10, help="measurement budget N (default 10)")
    runner.add_argument("--methods", type=method_list, default=METHOD_ORDER, help="comma separated methods")
    runner.add_argument("--max-points", type=int, default=1024, help="GP kernel fit subsample size")
    _add_rule(runner)
    _add_options(runner, ACQUISITION_OPTIONS)
    runner.set_defaults(handler=cmd_run)

    sweep = commands.add_parser("sweep", parents=[common], help="budget and environment size sweeps")
    sweep.add_argument("--dataset", default=None, help="dataset directory (default: synthesize)")
    sweep.add_argument("--scales", type=scale_list, default=(1,), help="comma separated scale factors")
    sweep.add_argument("--budgets", type=_list_of(int), default=DEFAULT_BUDGETS, help="comma separated budgets")
    sweep.add_argument("--methods", type=method_list, default=METHOD_ORDER, help="comma separated methods")
    sweep.add_argument("--repetitions", type=int, default=5, help="repetitions per cell (default 5)")
    sweep.add_argument("--train", type=int, default=3, dest="n_train", help="synthetic training pairs")
    sweep.add_argument("--eval", type=int, default=1, dest="n_eval", help="synthetic evaluation pairs")
    sweep.add_argument("--ap-location", type=_list_of(float), default=None, help="synthetic access point row,col")
    sweep.add_argument("--max-points", type=int, default=1024, help="GP kernel fit subsample size")
    _add_rule(sweep)
    _add_options(sweep, SYNTH_OPTIONS + TRAIN_OPTIONS + ACQUISITION_OPTIONS)
    sweep.set_defaults(handler=cmd_sweep)

    evaluate = commands.add_parser("eval", parents=[common], help="score an estimate against a pair")
    evaluate.add_argument("--estimate", required=True, help="REMAP estimate")
    evaluate.add_argument("--pair", required=True, help="pair JSON file")
    evaluate.set_defaults(handler=cmd_eval)

    return parser


def _add_rule(parser):
    parser.add_argument(
        "--rule",
        choices=[rule.value for rule in SelectionRule],
        default=SelectionRule.ARGMIN_VARIANCE.value,
        help="selection rule (default argmin_variance)",
    )


def config_tokens(config):
    """Command line tokens equivalent to a config dictionary."""

    tokens = []
    for key, value in config.items():
        if key == "config":
            continue

        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                tokens.append(flag)
        elif isinstance(value, list):
            tokens += [flag, ",".join(str(v) for v in value)]
        else:
            tokens += [flag, str(value)]

    return tokens


def parse_args(argv=None):
    """
    Parse the command line, with a config file's options inserted before the given ones.

    The config file options go straight after the command name, so the same option given
    on the command line comes later and wins.
    """

    argv = list(sys.argv[1:] if argv is None else argv)

    pre = CliArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)

    if known.config is not None:
        commands = ("synth", "train", "run", "sweep", "eval")
        position = next((i for i, token in enumerate(argv) if token in commands), None)
        if position is not None:
            argv[position + 1 : position + 1] = config_tokens(load_config(known.config))

    return build_parser().parse_args(argv)


def configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def _synth_config(args):
    config = SynthConfig(seed=args.seed, **_overrides(args, SYNTH_OPTIONS))
    if args.ap_location is not None:
        config = replace(config, ap_location=args.ap_location)

    return config.validate()


def cmd_synth(args):
    config = _synth_config(args)

    if (args.ingest_empty is None) != (args.ingest_occupied is None):
        raise UsageError("--ingest-empty and --ingest-occupied go together")

    if args.ingest_empty is not None:
        pairs = make_dataset(config, args.n_train, 1, args.scale)[: args.n_train]
        pairs.append(ingest_pair(args.ingest_empty, args.ingest_occupied, args.scale))
    else:
        pairs = make_dataset(config, args.n_train, args.n_eval, args.scale)

    write_dataset(args.out, pairs, config, args.scale)

    return EXIT_OK


def _dataset(args):
    directory = Path(args.dataset or args.out)
    train_pairs, eval_pairs, manifest = load_dataset(directory)

    if getattr(args, "scale", None) is not None and manifest.get("scale") != args.scale:
        raise DataError(f"dataset {directory} is at scale {manifest.get('scale')}, not {args.scale}")

    return train_pairs, eval_pairs


def cmd_train(args):
    train_pairs, eval_pairs = _dataset(args)
    cfg = TrainConfig(seed=args.seed, **_overrides(args, TRAIN_OPTIONS)).validate()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    try:
        model, trace = train(train_pairs, cfg, holdout=eval_pairs or None)
    except TrainingDivergedError as exc:
        exc.trace.write_csv(out / LOSS_TRACE_FILE)
        logger.error("training diverged in epoch %d, last good epoch %d", exc.epoch, exc.last_good_epoch)
        raise

    save_model(out / MODEL_FILE, model)
    trace.write_csv(out / LOSS_TRACE_FILE)

    return EXIT_OK


def cmd_run(args):
    _, eval_pairs = _dataset(args)
    if not 0 <= args.pair_index < len(eval_pairs):
        raise DataError(f"no evaluation pair {args.pair_index} ({len(eval_pairs)} in the dataset)")
    pair = eval_pairs[args.pair_index]

    acquisition = AcquisitionConfig(
        budget=args.budget,
        selection_rule=SelectionRule(args.rule),
        seed=args.seed,
        **_overrides(args, ACQUISITION_OPTIONS),
    )
    acquisition.validate(pair.empty.size)

    model = kernel = None
    if {"world_model", "gp_same_points"} & set(args.methods):
        model = load_model(args.model or Path(args.out) / MODEL_FILE)
    if {"gp_same_points", "gp_random_points"} & set(args.methods):
        kernel = fit_kernel(pair.empty, max_points=args.max_points, seed=args.seed)

    summary = run_methods(pair, acquisition, args.methods, args.out, model=model, kernel=kernel)
    logger.info("run finished with %s environment queries", summary.get("queries", 0))

    return EXIT_OK


def cmd_sweep(args):
    spec = ExperimentSpec(
        synth=_synth_config(args),
        dataset_dir=args.dataset,
        n_train=args.n_train,
        n_eval=args.n_eval,
        scales=args.scales,
        budgets=args.budgets,
        methods=args.methods,
        repetitions=args.repetitions,
        out_dir=args.out,
        seed=args.seed,
        train=TrainConfig(seed=args.seed, **_overrides(args, TRAIN_OPTIONS)),
        acquisition=AcquisitionConfig(
            selection_rule=SelectionRule(args.rule), seed=args.seed, **_overrides(args, ACQUISITION_OPTIONS)
        ),
        kernel_max_points=args.max_points,
    )

    summary = run_sweep(spec)
    logger.info("sweep computed %d cells, skipped %d", summary.computed, summary.skipped)

    return EXIT_OK


def cmd_eval(args):
    pair = load_pair(args.pair)
    scores = score_estimate(load_map(args.estimate, bounded=False), pair)

    print(json.dumps(scores, indent=2, sort_keys=True))

    return EXIT_OK


def main(argv=None):
    """Entry point; returns the process exit code."""

    try:
        args = parse_args(argv)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    configure_logging(args)

    try:
        return args.handler(args)
    except (UsageError, ConfigError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except NumericalError as exc:
        logger.error("%s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

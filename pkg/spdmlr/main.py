import argparse
import json
import os
import sys

import spdmlr.core.constants as constants
from spdmlr.core import util
from spdmlr.core.config import Config
from spdmlr.core.error import ConfigurationError, SpdMlrError
from spdmlr.core.logger import Logger, configure_root_logger
from spdmlr.geometry.metrics import MetricSpec
from spdmlr.harness.checks import equivalence_check, gradcheck
from spdmlr.harness.cloud import parse_matrix_2x2, write_cloud
from spdmlr.harness.dataset import DatasetManager
from spdmlr.harness.evaluation import evaluate
from spdmlr.harness.params import ParamsManager
from spdmlr.harness.trainer import Trainer
from spdmlr.version import __version__


def add_metric_arguments(parser, default_kind=constants.METRIC_LEM):
    parser.add_argument(
        "--metric",
        choices=[constants.METRIC_LEM, constants.METRIC_LCM],
        default=default_kind,
        help=f"Pullback metric (default: {default_kind})",
    )
    parser.add_argument("--alpha", type=float, default=1.0, help="LEM alpha (default: 1)")
    parser.add_argument("--beta", type=float, default=0.0, help="LEM beta (default: 0)")
    parser.add_argument("--theta", type=float, default=1.0, help="LCM theta (default: 1)")


def metric_from_args(args):
    if args.metric == constants.METRIC_LCM:
        return MetricSpec.lcm(args.theta)
    return MetricSpec.lem(args.alpha, args.beta)


def global_arguments(suppress=False):
    # Subcommand copies must not reset values given before the subcommand name.
    default = argparse.SUPPRESS if suppress else None
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        metavar="FILE",
        action="store",
        default=default,
        help=f"Config file, YAML or key=value lines (default: ${constants.CONFIG_ENV_VAR})",
    )
    common.add_argument(
        "-d",
        "--debug",
        action="store_true",
        default=argparse.SUPPRESS if suppress else False,
        help="Enable debug mode",
    )
    common.add_argument(
        "-e",
        "--debug-log",
        metavar="FILEPATH",
        action="store",
        default=default,
        help="Debug logging to FILEPATH",
    )
    return common


def build_parser():
    common = global_arguments(suppress=True)
    parser = argparse.ArgumentParser(prog="spdmlr", parents=[global_arguments()])
    parser.add_argument(
        "--version",
        "-v",
        action="version",
        version=f"%(prog)s version {__version__}",
        help="Print version and exit.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    train = subparsers.add_parser(
        "train", parents=[common], help="Train a network and write a report"
    )
    train.add_argument(
        "--data", required=True, help=f"spdcsv file, or '{constants.SYNTH_DATA_SOURCE}'"
    )
    train.add_argument("--out", required=True, metavar="DIR", help="Output directory")
    train.add_argument(
        "--sweep-beta", action="store_true", help="Train LEM(1, beta) over the beta candidates"
    )
    train.add_argument(
        "--sweep-theta", action="store_true", help="Train LCM(theta) over the theta candidates"
    )
    train.add_argument(
        "--repeats", type=int, default=1, metavar="K", help="Repeat with K consecutive seeds"
    )
    train.add_argument("--epochs", type=int, help="Override epochs")
    train.add_argument("--seed", type=int, help="Override seed")
    train.add_argument("--weight-decay", type=float, help="Override weight decay")
    train.add_argument("--workers", type=int, help="Evaluation threads")

    evaluate_cmd = subparsers.add_parser(
        "eval", parents=[common], help="Evaluate trained parameters"
    )
    evaluate_cmd.add_argument("--params", required=True, metavar="FILE", help="Parameter archive")
    evaluate_cmd.add_argument("--data", required=True, metavar="FILE", help="spdcsv file")
    evaluate_cmd.add_argument("--workers", type=int, help="Evaluation threads")

    check = subparsers.add_parser(
        "gradcheck", parents=[common], help="Finite-difference gradient check"
    )
    check.add_argument("--seed", type=int, default=0)

    equiv = subparsers.add_parser(
        "equivcheck", parents=[common], help="LEM MLR vs LogEig MLR lockstep check"
    )
    equiv.add_argument("--steps", type=int, default=100)
    equiv.add_argument("--seed", type=int, default=0)
    add_metric_arguments(equiv)

    synth = subparsers.add_parser("synth", parents=[common], help="Generate a synthetic dataset")
    synth.add_argument("--n", type=int, required=True, help="Matrix dimension")
    synth.add_argument("--classes", type=int, required=True)
    synth.add_argument("--per-class", type=int, required=True)
    synth.add_argument("--spread", type=float, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, metavar="FILE")
    add_metric_arguments(synth)

    cloud = subparsers.add_parser(
        "hyperplane-cloud", parents=[common], help="Emit points near a 2x2 SPD hyperplane"
    )
    add_metric_arguments(cloud)
    cloud.add_argument(
        "--shift", nargs="+", type=float, required=True, help="x y z, or 4 row-major entries"
    )
    cloud.add_argument(
        "--normal", nargs="+", type=float, required=True, help="x y z, or 4 row-major entries"
    )
    cloud.add_argument("--out", required=True, metavar="FILE")
    cloud.add_argument("--resolution", type=int, default=constants.CLOUD_DEFAULT_RESOLUTION)
    cloud.add_argument("--band", type=float, default=constants.CLOUD_DEFAULT_BAND)
    cloud.add_argument("--extent", type=float, default=constants.CLOUD_DEFAULT_EXTENT)
    return parser


def load_config(args):
    config = Config(args=args)
    config_file = args.config or os.environ.get(constants.CONFIG_ENV_VAR)
    if config_file:
        config.load_from_file(config_file)
    if args.debug_log is not None:
        config.set("debug.log.enabled", True)
        config.set("debug.log.filepath", args.debug_log)
    if args.debug:
        config.set("log.console.level", "debug")
        config.set("debug.log.enabled", True)
        config.set("debug.log.level", "debug")
    for key in ("epochs", "seed", "weight_decay", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            config.set(key, value)
    configure_root_logger(config)
    return config


def raise_failure(error, message):
    if isinstance(error, (SpdMlrError, OSError)):
        raise error
    raise ConfigurationError(message)


def command_train(config, args):
    if args.sweep_beta and args.sweep_theta:
        raise ConfigurationError("choose one of --sweep-beta and --sweep-theta")
    if args.repeats < 1:
        raise ConfigurationError(f"--repeats must be >= 1, got {args.repeats}")
    if args.repeats > 1 and (args.sweep_beta or args.sweep_theta):
        raise ConfigurationError("--repeats cannot be combined with a sweep")
    config.validate_run_settings()
    success, dataset, message = DatasetManager(config).resolve(args.data)
    if not success:
        raise_failure(dataset, message)
    util.print_status_message(True, message)
    trainer = Trainer(config)
    if args.sweep_beta or args.sweep_theta:
        report, network = trainer.sweep(dataset, "beta" if args.sweep_beta else "theta")
        util.print_table(report.label, ["setting", "accuracy", "balanced accuracy"], report.rows())
    elif args.repeats > 1:
        report, network = trainer.repeats(dataset, args.repeats)
        util.print_table(report.label, ["seed", "accuracy", "balanced accuracy"], report.rows())
    else:
        report, network = trainer.train(dataset)
    report.write(args.out)
    success, _, message = ParamsManager(config).save(
        network, os.path.join(args.out, constants.PARAMS_FILENAME)
    )
    util.print_status_message(success, message)
    print(report.summary_line())
    return constants.EXIT_SUCCESS if success else constants.EXIT_VALIDATION_FAILURE


def command_eval(config, args):
    success, network, message = ParamsManager(config).load(args.params)
    if not success:
        raise_failure(network, message)
    success, dataset, message = DatasetManager(config).load(args.data)
    if not success:
        raise_failure(dataset, message)
    result = evaluate(network, dataset, workers=int(config.get("workers")))
    print(json.dumps(result.to_dict(), indent=4))
    if result.warning:
        util.print_status_message(False, f"classes without samples: {result.empty_classes}")
    print(f"acc={result.accuracy:.4f} bacc={result.balanced_accuracy:.4f}")
    return constants.EXIT_SUCCESS


def command_gradcheck(config, args):
    report = gradcheck(seed=args.seed)
    util.print_table(
        "gradcheck", ["head", "param", "analytic", "numeric", "rel error"], report.rows()
    )
    if report.passed:
        util.print_status_message(True, f"gradcheck passed for heads: {', '.join(report.heads())}")
        return constants.EXIT_SUCCESS
    names = ", ".join(f"{entry.head}:{entry.param}" for entry in report.failures)
    util.print_status_message(False, f"gradcheck failed for {names}")
    return constants.EXIT_VALIDATION_FAILURE


def command_equivcheck(config, args):
    if args.steps < 1:
        raise ConfigurationError(f"--steps must be >= 1, got {args.steps}")
    report = equivalence_check(steps=args.steps, seed=args.seed, metric=metric_from_args(args))
    print(f"metric={report.metric} steps={args.steps} max_gap={report.max_gap:.3e}")
    return constants.EXIT_SUCCESS


def command_synth(config, args):
    manager = DatasetManager(config)
    success, dataset, message = manager.synth(
        args.n, args.classes, args.per_class, args.spread, metric_from_args(args), args.seed
    )
    if not success:
        raise_failure(dataset, message)
    success, _, message = manager.save(dataset, args.out)
    util.print_status_message(success, message)
    return constants.EXIT_SUCCESS if success else constants.EXIT_VALIDATION_FAILURE


def command_hyperplane_cloud(config, args):
    shift = parse_matrix_2x2(args.shift, "--shift")
    normal = parse_matrix_2x2(args.normal, "--normal")
    _, points = write_cloud(
        args.out,
        metric_from_args(args),
        shift,
        normal,
        resolution=args.resolution,
        band=args.band,
        extent=args.extent,
    )
    util.print_status_message(True, f"Wrote {len(points)} points to {args.out}")
    return constants.EXIT_SUCCESS


COMMANDS = {
    "train": command_train,
    "eval": command_eval,
    "gradcheck": command_gradcheck,
    "equivcheck": command_equivcheck,
    "synth": command_synth,
    "hyperplane-cloud": command_hyperplane_cloud,
}


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; 2 is reserved for numerical aborts.
        if e.code:
            return constants.EXIT_VALIDATION_FAILURE
        raise
    try:
        config = load_config(args)
        log = Logger("main", config)
        log.debug(f"Running command {args.command}")
        return COMMANDS[args.command](config, args)
    except SpdMlrError as e:
        util.print_status_message(False, str(e))
        return e.exit_code
    except (FileNotFoundError, OSError) as e:
        util.print_status_message(False, str(e))
        return constants.EXIT_VALIDATION_FAILURE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/rank error.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .dataset import generate_synthetic, load_image_folder, write_image_folder
from .errors import DataError, EcrcError, InvalidArgumentError, ShapeError
from .persist import load_model, persist_model

log = logging.getLogger("ecrc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write(data, dest):
    if dest in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(dest).write_bytes(data)


def cmd_synth(args):
    train, test = generate_synthetic(args.classes, args.per_class, args.height, args.width,
                                     args.noise, args.seed, args.test_per_class)
    write_image_folder(args.out, train, test)
    log.info("wrote %d train / %d test images to %s", len(train), len(test), args.out)


def cmd_train(args):
    config = harness.load_config(args.config)
    train, _ = harness.load_data(config)
    model = harness.train_model(config, train)
    persist_model(model, args.out)
    log.info("trained %d channels on %d images -> %s", model.channel_count, len(train), args.out)


def cmd_eval(args):
    model = load_model(args.model)
    experiment = model.metadata.get("experiment", {})
    config = harness.config_from_mapping(experiment) if experiment else harness.ExperimentConfig()
    test = load_image_folder(args.data, args.manifest, config.preprocess_spec())
    if test.image_shape != model.image_shape:
        raise DataError(f"{args.data}: images are {test.image_shape}, model expects {model.image_shape}")
    if test.class_names != model.class_names:
        raise DataError(f"{args.data}: classes {test.class_names} differ from the model's {model.class_names}")
    weighting = args.weighting or config.weighting
    report = harness.report_for_model(model, test, weighting, args.workers or config.workers, experiment)
    _write(harness.emit_report(report, args.format, args.timings), args.report)


def cmd_run(args):
    config = harness.load_config(args.config)
    report = harness.run_experiment(config)
    _write(harness.emit_report(report, args.format, args.timings), args.report)


def cmd_sweep(args):
    config = harness.load_config(args.config)
    values = harness.parse_axis_values(args.axis, args.values)
    points = harness.sweep(config, args.axis, values)
    _write(harness.emit_report(points, args.format, args.timings), args.report)


def build_parser():
    parser = _Parser(prog="ecrc", description="Ensemble collaborative representation classification.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic image-folder dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--test-per-class", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=24)
    p.add_argument("--width", type=int, default=24)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on the config's train split")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    formats = dict(choices=harness.FORMATS, default="human")
    p = sub.add_parser("eval", help="evaluate a saved model on an image folder")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", default="test.txt")
    p.add_argument("--report", default="-")
    p.add_argument("--format", **formats)
    p.add_argument("--weighting", choices=("weighted", "unweighted"))
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--timings", action="store_true", help="include wall-clock timings")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="train and evaluate with repeats")
    p.add_argument("--config", required=True)
    p.add_argument("--report", default="-")
    p.add_argument("--format", **formats)
    p.add_argument("--timings", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep ensemble size, PCA dimension or weighting")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=harness.AXES)
    p.add_argument("--values", required=True, help="comma-separated list")
    p.add_argument("--report", default="-")
    p.add_argument("--format", choices=harness.FORMATS, default="delimited")
    p.add_argument("--timings", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (InvalidArgumentError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EcrcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

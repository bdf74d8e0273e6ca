"""Command line entry point: ``decal <subcommand> ...``.

Exit status is 0 on success, 1 when ``verify`` finds a gap above epsilon and
2 on bad input.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checks import classwise_gap, confidence_gap, decision_gap, distribution_gap
from .core import InvalidInputError, LossMatrix
from .decisions import loss_gap, sample_random_losses
from .experiment import ExperimentConfig, loss_metrics, run_experiment
from .io import dataset_to_csv, dataset_to_json, dumps, load_dataset, save_dataset
from .partitions import SearchConfig
from .recalibration import RecalibrationModel, recalibrate
from .synthetic import generate_synthetic

NOTIONS = ("decision", "confidence", "classwise", "distribution")


def _emit(text, output):
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text + ("" if text.endswith("\n") else "\n"))


def _load(args):
    return load_dataset(args.input, args.format, args.renormalize)


def cmd_verify(args):
    ds = _load(args)
    notions = [n.strip() for n in args.notions.split(",") if n.strip()]
    unknown = set(notions) - set(NOTIONS)
    if unknown:
        raise InvalidInputError(f"unknown notion(s): {', '.join(sorted(unknown))}")
    reports = []
    for n in notions:
        if n == "decision":
            reports.append(decision_gap(ds, args.actions, SearchConfig(seed=args.seed), args.epsilon))
        elif n == "confidence":
            reports.append(confidence_gap(ds, epsilon=args.epsilon))
        elif n == "classwise":
            reports.append(classwise_gap(ds, epsilon=args.epsilon))
        else:
            reports.append(distribution_gap(ds, epsilon=args.epsilon))
    _emit(dumps({"reports": [r.to_dict() for r in reports]}), args.output)
    return 0 if all(r.passed for r in reports) else 1


def cmd_recalibrate(args):
    ds = _load(args)
    model, trace = recalibrate(ds, args.actions, args.epsilon, args.mode,
                               SearchConfig(seed=args.seed), args.max_iterations)
    Path(args.model).write_text(model.to_json())
    summary = {"termination_reason": trace.termination_reason,
               "iterations": trace.num_iterations,
               "norm_value": trace.norm_value, "l2_error": trace.l2_error}
    _emit(dumps(summary), args.output)
    return 0


def cmd_apply(args):
    ds = _load(args)
    model = RecalibrationModel.from_json(Path(args.model).read_text())
    _write_dataset(ds.with_predictions(model.apply(ds.predictions)), args)
    return 0


def cmd_loss_gap(args):
    ds = _load(args)
    if args.loss:
        loss = LossMatrix.from_dict(json.loads(Path(args.loss).read_text()))
        _emit(dumps(loss_gap(ds, loss).to_dict()), args.output)
        return 0
    losses = sample_random_losses(args.actions, ds.num_classes, args.count, args.seed)
    _emit(dumps(loss_metrics(ds, losses)), args.output)
    return 0


def _write_dataset(ds, args):
    if args.output:
        save_dataset(ds, args.output, args.format)
    else:
        _emit(dataset_to_json(ds) if args.format == "json" else dataset_to_csv(ds), None)


def cmd_simulate(args):
    ds, _ = generate_synthetic(args.classes, args.samples, args.alpha, args.distortion, args.seed)
    _write_dataset(ds, args)
    return 0


def cmd_experiment(args):
    overrides = json.loads(Path(args.config).read_text()) if args.config else {}
    for key, val in (("seed", args.seed), ("num_actions", args.actions),
                     ("epsilon", args.epsilon), ("num_classes", args.classes),
                     ("num_samples", args.samples), ("num_random_losses", args.losses),
                     ("distortion", args.distortion), ("data_path", args.input),
                     ("max_steps", args.max_iterations), ("mode", args.mode)):
        if val is not None:
            overrides[key] = val
    if args.temperature_scaling:
        overrides["temperature_scaling"] = True
    report = run_experiment(ExperimentConfig(**overrides))
    _emit(report.to_json(), args.output)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="decal", description="Decision calibration toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp, needs_input=True):
        if needs_input:
            sp.add_argument("input", help="CSV or JSON dataset")
        sp.add_argument("--format", choices=("csv", "json"), default=None)
        sp.add_argument("--renormalize", action="store_true",
                        help="renormalize probability rows that do not sum to 1")
        sp.add_argument("--output", "-o", default=None)

    sp = sub.add_parser("verify", help="report calibration gaps")
    data_args(sp)
    sp.add_argument("--actions", "-K", type=int, default=2)
    sp.add_argument("--epsilon", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--notions", default="decision",
                    help="comma-separated subset of " + ",".join(NOTIONS))
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("recalibrate", help="train and save a recalibration model")
    data_args(sp)
    sp.add_argument("--actions", "-K", type=int, default=2)
    sp.add_argument("--epsilon", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--mode", choices=("hard", "soft"), default="soft")
    sp.add_argument("--max-iterations", type=int, default=None)
    sp.add_argument("--model", required=True, help="where to write the model JSON")
    sp.set_defaults(func=cmd_recalibrate)

    sp = sub.add_parser("apply", help="apply a saved model to predictions")
    data_args(sp)
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=cmd_apply)

    sp = sub.add_parser("loss-gap", help="loss gap for a given loss or random losses")
    data_args(sp)
    sp.add_argument("--loss", default=None, help="LossMatrix JSON; random losses if omitted")
    sp.add_argument("--actions", "-K", type=int, default=2)
    sp.add_argument("--count", type=int, default=500)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_loss_gap)

    sp = sub.add_parser("simulate", help="generate a synthetic dataset")
    sp.add_argument("--classes", "-C", type=int, default=3)
    sp.add_argument("--samples", "-N", type=int, default=1000)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--distortion", default="identity")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--format", choices=("csv", "json"), default=None)
    sp.add_argument("--output", "-o", default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("experiment", help="full recalibration and loss-gap run")
    sp.add_argument("--config", default=None, help="JSON file of ExperimentConfig fields")
    sp.add_argument("--input", default=None, help="dataset CSV instead of synthetic data")
    sp.add_argument("--classes", "-C", type=int, default=None)
    sp.add_argument("--samples", "-N", type=int, default=None)
    sp.add_argument("--actions", "-K", type=int, default=None)
    sp.add_argument("--epsilon", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--losses", type=int, default=None)
    sp.add_argument("--distortion", default=None)
    sp.add_argument("--mode", choices=("hard", "soft"), default=None)
    sp.add_argument("--max-iterations", type=int, default=None)
    sp.add_argument("--temperature-scaling", action="store_true")
    sp.add_argument("--output", "-o", default=None)
    sp.add_argument("--csv", default=None, help="also write the per-step table here")
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInputError, OSError, json.JSONDecodeError, TypeError, KeyError) as exc:
        print(f"decal: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

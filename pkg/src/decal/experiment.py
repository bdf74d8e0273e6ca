"""Loss-gap experiment: recalibrate, then track decision metrics step by step."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .checks import classwise_gap, confidence_gap, decision_gap, distribution_gap
from .core import CalibrationDataset, InvalidInputError, softmax
from .decisions import batch_loss_metrics, sample_random_losses
from .io import dumps, read_csv_table
from .partitions import SearchConfig
from .recalibration import RecalibrationModel, recalibrate
from .synthetic import generate_synthetic
from .temperature import temperature_scale

LOSS_CHUNK = 50
METRICS = ("avg_loss_gap", "worst_loss_gap", "avg_decision_loss", "accuracy", "l2_error")


def num_threads():
    """Worker cap from ``DECAL_THREADS``; defaults to the CPU count."""
    env = os.environ.get("DECAL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise InvalidInputError(f"DECAL_THREADS must be an integer, got {env!r}") from None
        return max(n, 1)
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    num_actions: int = 3
    epsilon: float = 0.05
    num_random_losses: int = 500
    calibration_fraction: float = 0.7
    test_fraction: float = 0.3
    num_classes: int = 7
    num_samples: int = 20000
    dirichlet_alpha: float = 1.0
    distortion: str = "temperature:0.5"
    data_path: str = None
    temperature_scaling: bool = False
    mode: str = "soft"
    max_steps: int = None
    search_restarts: int = 10
    search_steps: int = 300

    def __post_init__(self):
        a, b = self.calibration_fraction, self.test_fraction
        if a <= 0 or b <= 0 or a + b > 1 + 1e-12:
            raise InvalidInputError("split fractions must be positive and sum to at most 1")
        if self.num_random_losses < 1:
            raise InvalidInputError("need at least one random loss")

    @property
    def search_config(self):
        return SearchConfig(seed=self.seed, restarts=self.search_restarts,
                            steps=self.search_steps)

    def to_dict(self):
        return asdict(self)


@dataclass
class ExperimentReport:
    """Per-step metrics; index 0 is the input predictor (after temperature scaling)."""

    config: dict
    temperature: float
    termination_reason: str
    steps: list
    calibration: dict
    test: dict
    reports: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)
    model: dict = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return dumps(self.to_dict())

    def to_csv(self):
        cols = [f"{split}_{m}" for split in ("calibration", "test") for m in METRICS]
        lines = [",".join(["step"] + cols)]
        for i, s in enumerate(self.steps):
            vals = [repr(getattr(self, split)[m][i])
                    for split in ("calibration", "test") for m in METRICS]
            lines.append(",".join([str(s)] + vals))
        return "\n".join(lines) + "\n"


def _source(config):
    """``(logits, labels, weights)`` of the full dataset."""
    if config.data_path:
        kind, values, labels, weights, _ = read_csv_table(config.data_path)
        if kind == "p":
            with np.errstate(divide="ignore"):
                values = np.log(CalibrationDataset(values, labels).predictions)
        return values, labels, weights
    ds, _ = generate_synthetic(config.num_classes, config.num_samples, config.dirichlet_alpha,
                               config.distortion, config.seed)
    with np.errstate(divide="ignore"):
        return np.log(ds.predictions), ds.labels, ds.weights


def prepare(config):
    """Build ``(calibration, test, losses, temperature)`` exactly as the experiment does."""
    logits, labels, weights = _source(config)
    N = len(labels)
    perm = np.random.default_rng([config.seed, 1]).permutation(N)
    n_cal = int(round(config.calibration_fraction * N))
    n_test = int(round(config.test_fraction * N))
    if n_cal < 1 or n_test < 1 or n_cal + n_test > N:
        raise InvalidInputError("splits leave an empty calibration or test set")
    cal_idx, test_idx = perm[:n_cal], perm[n_cal:n_cal + n_test]

    t = 1.0
    if config.temperature_scaling:
        t, _ = temperature_scale(np.nan_to_num(logits[cal_idx], neginf=-745.0),
                                 labels[cal_idx], weights[cal_idx])

    def split(idx):
        return CalibrationDataset(softmax(logits[idx] / t, axis=1), labels[idx], weights[idx])

    C = logits.shape[1]
    losses = sample_random_losses(config.num_actions, C, config.num_random_losses,
                                  [config.seed, 2])
    return split(cal_idx), split(test_idx), losses, t


def loss_metrics(dataset, losses):
    """Average/worst loss gap and average true decision loss over ``losses``."""
    chunks = [losses[i:i + LOSS_CHUNK] for i in range(0, len(losses), LOSS_CHUNK)]
    with ThreadPoolExecutor(max_workers=min(num_threads(), len(chunks))) as ex:
        parts = list(ex.map(lambda ch: batch_loss_metrics(dataset, ch), chunks))
    true = np.concatenate([p[1] for p in parts])
    gap = np.concatenate([p[2] for p in parts])
    return {"avg_loss_gap": float(gap.mean()), "worst_loss_gap": float(gap.max()),
            "avg_decision_loss": float(true.mean())}


def step_metrics(dataset, losses):
    m = loss_metrics(dataset, losses)
    m["accuracy"] = dataset.accuracy()
    m["l2_error"] = dataset.l2_error()
    return m


def notion_reports(dataset, K, epsilon, search_config):
    return {r.notion: r.to_dict() for r in (
        decision_gap(dataset, K, search_config, epsilon),
        confidence_gap(dataset, epsilon=epsilon),
        classwise_gap(dataset, epsilon=epsilon),
        distribution_gap(dataset, epsilon=epsilon),
    )}


def run_experiment(config):
    cal, test, losses, t = prepare(config)
    model, trace = recalibrate(cal, config.num_actions, config.epsilon, config.mode,
                               config.search_config, max_iterations=config.max_steps)
    steps = list(range(len(model.layers) + 1))
    series = {"calibration": {m: [] for m in METRICS}, "test": {m: [] for m in METRICS}}
    for s in steps:
        for name, ds in (("calibration", cal), ("test", test)):
            m = step_metrics(ds.with_predictions(model.apply(ds.predictions, num_layers=s)), losses)
            for k in METRICS:
                series[name][k].append(m[k])

    final_test = test.with_predictions(model.apply(test.predictions))
    reports = {
        "initial": notion_reports(test, config.num_actions, config.epsilon, config.search_config),
        "final": notion_reports(final_test, config.num_actions, config.epsilon,
                                config.search_config),
    }
    trace_summary = {"squared_value": trace.squared_value, "norm_value": trace.norm_value,
                     "applied_value": trace.applied_value, "l2_error": trace.l2_error}
    return ExperimentReport(config.to_dict(), float(t), trace.termination_reason, steps,
                            series["calibration"], series["test"], reports, trace_summary,
                            model.to_dict())


def report_model(report):
    return RecalibrationModel.from_dict(report.model)

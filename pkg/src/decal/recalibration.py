"""Iterative partition-and-shift recalibration.

Each round finds the partition on which the current predictions are most
miscalibrated, then shifts the predictions in every cell by the average
residual there and projects back onto the simplex. Hard rounds use argmax
cells and per-cell means; soft rounds use softmax memberships and solve the
small least-squares problem ``U = R^T D^+`` for the shift matrix.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (InvalidInputError, PartitionWeights, project_to_simplex,
                   pseudo_inverse, softmax)
from .decisions import bayes_decide
from .partitions import SearchConfig, find_worst_partition

SHARPNESS_SCALES = 2.0 ** np.arange(13)


@dataclass(frozen=True)
class Layer:
    """One recalibration round.

    Hard layers store a ``(K, C)`` array of per-cell shifts; soft layers store
    the ``(C, K)`` matrix mapping memberships to a shift.
    """

    partition: PartitionWeights
    shifts: np.ndarray

    def __post_init__(self):
        s = np.array(self.shifts, dtype=float)
        K, C = self.partition.w.shape
        want = (K, C) if self.partition.mode == "hard" else (C, K)
        if s.shape != want:
            raise InvalidInputError(f"{self.partition.mode} layer needs shifts of shape {want}")
        s.setflags(write=False)
        object.__setattr__(self, "shifts", s)

    @property
    def mode(self):
        return self.partition.mode

    def adjustment(self, Q):
        if self.mode == "hard":
            return self.shifts[self.partition.cells(Q)]
        return self.partition.memberships(Q) @ self.shifts.T

    def apply(self, Q):
        Q = np.atleast_2d(Q)
        return project_to_simplex(Q + self.adjustment(Q))

    def to_dict(self):
        return {"mode": self.mode, "w": self.partition.w.tolist(),
                "shifts_or_U": self.shifts.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(PartitionWeights(d["mode"], np.asarray(d["w"], dtype=float)),
                   np.asarray(d["shifts_or_U"], dtype=float))


@dataclass(frozen=True)
class RecalibrationModel:
    layers: tuple
    num_classes: int
    num_actions: int
    tolerance: float

    def apply(self, q, num_layers=None):
        """Push predictions through the first ``num_layers`` layers (all by default)."""
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.num_classes:
            raise InvalidInputError(
                f"model expects {self.num_classes} classes, got {q.shape[-1]}")
        Q = np.atleast_2d(q)
        for layer in self.layers[:num_layers]:
            Q = layer.apply(Q)
        return Q[0] if q.ndim == 1 else Q

    __call__ = apply

    def to_dict(self):
        return {"num_classes": self.num_classes, "num_actions": self.num_actions,
                "tolerance": self.tolerance,
                "layers": [l.to_dict() for l in self.layers]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(Layer.from_dict(l) for l in d["layers"]),
                   int(d["num_classes"]), int(d["num_actions"]), float(d["tolerance"]))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class TrainTrace:
    """Per-state diagnostics; entry ``t`` describes predictions after ``t`` layers.

    ``squared_value``/``norm_value`` are the certified (hard) objectives found
    at that state and ``applied_value`` is the squared objective of the
    partition actually used to build layer ``t + 1`` (``None`` for the last
    state).
    """

    squared_value: list = field(default_factory=list)
    norm_value: list = field(default_factory=list)
    applied_value: list = field(default_factory=list)
    l2_error: list = field(default_factory=list)
    termination_reason: str = ""
    predictions: np.ndarray = None

    @property
    def num_iterations(self):
        return len(self.l2_error) - 1


def hard_shifts(dataset, partition):
    """Per-cell mean residual ``E[(y - p) b_a] / E[b_a]``; empty cells get zero."""
    B = partition.memberships(dataset.predictions)
    pw = dataset.probabilities
    R = (B * pw[:, None]).T @ (-dataset.residuals())
    mass = B.T @ pw
    d = np.zeros_like(R)
    nz = mass > 0
    d[nz] = R[nz] / mass[nz, None]
    return d


def soft_shift_matrix(B, dataset):
    """Shift matrix ``R^T D^+`` for memberships ``B`` together with ``R``."""
    pw = dataset.probabilities
    Bw = B * pw[:, None]
    D = Bw.T @ B
    R = Bw.T @ (-dataset.residuals())
    return R.T @ pseudo_inverse(D), R


def _sharpen(dataset, w):
    """Rescale ``w`` so the softmax partition captures the most miscalibration."""
    best = None
    for s in SHARPNESS_SCALES:
        B = softmax(dataset.predictions @ (s * w).T, axis=1)
        R = (B * dataset.probabilities[:, None]).T @ dataset.residuals()
        v = float(np.sum(R ** 2))
        if best is None or v > best[0]:
            best = (v, s)
    return best[1] * w, best[0]


def iteration_cap(K, epsilon):
    return math.ceil(8 * K / epsilon ** 2)


def recalibrate(dataset, K, epsilon, mode="soft", search_config=None, max_iterations=None):
    """Recalibrate until no ``K``-cell partition shows miscalibration above ``epsilon``.

    Stops once the certified squared objective drops below ``epsilon**2 / K``
    or after ``max_iterations`` layers (default ``ceil(8 K / epsilon**2)``).
    Returns the trained model and a :class:`TrainTrace`.
    """
    if not 0 < epsilon < 1:
        raise InvalidInputError("epsilon must lie in (0, 1)")
    if mode not in ("hard", "soft"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    if K < 1:
        raise InvalidInputError("K must be at least 1")
    if search_config is None:
        search_config = SearchConfig(seed=0)
    cap = iteration_cap(K, epsilon) if max_iterations is None else int(max_iterations)
    threshold = epsilon ** 2 / K

    layers = []
    trace = TrainTrace()
    P = np.array(dataset.predictions)
    current = dataset
    t = 0
    while True:
        part, obj = find_worst_partition(current, K, search_config, stream=t,
                                         target="squared")
        trace.squared_value.append(obj.squared_value)
        trace.norm_value.append(obj.norm_value)
        trace.l2_error.append(current.l2_error())
        if obj.squared_value < threshold:
            trace.termination_reason = "tolerance_met"
            break
        if t >= cap:
            trace.termination_reason = "max_iterations"
            break

        if mode == "hard":
            layer = Layer(part, hard_shifts(current, part))
            applied = obj.squared_value
        else:
            w, applied = _sharpen(current, part.w)
            soft = PartitionWeights("soft", w)
            U, _ = soft_shift_matrix(soft.memberships(current.predictions), current)
            layer = Layer(soft, U)
        trace.applied_value.append(applied)
        layers.append(layer)
        P = layer.apply(P)
        current = current.with_predictions(P)
        t += 1

    trace.applied_value.append(None)
    trace.predictions = P
    model = RecalibrationModel(tuple(layers), dataset.num_classes, K, float(epsilon))
    return model, trace


@dataclass(frozen=True)
class CompressedPredictor:
    """Replaces each prediction by the mean prediction of its Bayes-action group."""

    loss: object
    action_means: dict

    @property
    def support_size(self):
        return len(self.action_means)

    def __call__(self, Q):
        Q = np.asarray(Q, dtype=float)
        Q2 = np.atleast_2d(Q)
        out = Q2.copy()
        actions = bayes_decide(self.loss, Q2)
        for a, mean in self.action_means.items():
            out[actions == a] = mean
        return out[0] if Q.ndim == 1 else out

    def apply_to(self, dataset):
        return dataset.with_predictions(self(dataset.predictions))


def compress_for_loss(dataset, loss):
    """Average predictions within each Bayes-action group of ``loss``.

    Predictions whose action never occurs in ``dataset`` pass through unchanged.
    """
    actions = bayes_decide(loss, dataset.predictions)
    means = {}
    for a in np.unique(actions):
        sel = actions == a
        w = dataset.weights[sel]
        means[int(a)] = (w @ dataset.predictions[sel]) / w.sum()
    return CompressedPredictor(loss, means)

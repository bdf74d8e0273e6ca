"""Synthetic predictions with a known ground-truth conditional distribution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CalibrationDataset, InvalidInputError, softmax


@dataclass(frozen=True)
class Distortion:
    """How predictions are bent away from the true probabilities.

    ``kind`` is ``"identity"``, ``"temperature"`` (``params = (t,)``;
    ``t < 1`` is over-confident) or ``"swap"`` (``params = (c1, c2, rho)``:
    move fraction ``rho`` of class ``c1``'s mass onto ``c2``).
    """

    kind: str = "identity"
    params: tuple = ()

    @classmethod
    def parse(cls, spec):
        """Parse ``"identity"``, ``"temperature:0.5"`` or ``"swap:0:1:0.3"``."""
        if isinstance(spec, Distortion):
            return spec
        parts = str(spec).split(":")
        kind, args = parts[0], parts[1:]
        try:
            if kind == "identity" and not args:
                return cls("identity")
            if kind == "temperature" and len(args) == 1:
                return cls("temperature", (float(args[0]),))
            if kind == "swap" and len(args) == 3:
                return cls("swap", (int(args[0]), int(args[1]), float(args[2])))
        except ValueError:
            pass
        raise InvalidInputError(f"invalid distortion spec {spec!r}")

    def __str__(self):
        return ":".join([self.kind, *map(str, self.params)])

    def __call__(self, P):
        P = np.asarray(P, dtype=float)
        if self.kind == "identity":
            return P.copy()
        if self.kind == "temperature":
            (t,) = self.params
            if t <= 0:
                raise InvalidInputError("temperature must be positive")
            with np.errstate(divide="ignore"):
                return softmax(np.log(P) / t, axis=1)
        if self.kind == "swap":
            c1, c2, rho = self.params
            C = P.shape[1]
            if not (0 <= c1 < C and 0 <= c2 < C) or c1 == c2 or not 0 <= rho <= 1:
                raise InvalidInputError(f"invalid swap parameters {self.params}")
            out = P.copy()
            moved = rho * out[:, c1]
            out[:, c1] -= moved
            out[:, c2] += moved
            return out
        raise InvalidInputError(f"unknown distortion {self.kind!r}")


def generate_synthetic(C, N, dirichlet_alpha=1.0, distortion="identity", seed=0):
    """Draw ``p* ~ Dirichlet(alpha)``, ``y ~ Categorical(p*)`` and distort ``p*``.

    Returns ``(dataset, ground_truth)`` where ``ground_truth`` is the ``(N, C)``
    array of true conditional probabilities.
    """
    if N < 1:
        raise InvalidInputError("N must be at least 1")
    if C < 2:
        raise InvalidInputError("need at least two classes")
    distort = Distortion.parse(distortion)
    rng = np.random.default_rng(seed)
    truth = rng.dirichlet(np.full(C, float(dirichlet_alpha)), size=N)
    u = rng.random(N)
    labels = np.minimum((truth.cumsum(axis=1) < u[:, None]).sum(axis=1), C - 1)
    preds = distort(truth)
    return CalibrationDataset(preds, labels), truth

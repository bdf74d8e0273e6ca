"""Calibration verifiers.

Decision calibration is certified through the worst linear partition. The
classic notions (confidence, classwise, distribution) are checked in their
native conditional-mean form by grouping samples on the conditioning value.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import UnsupportedInstanceError
from .partitions import (SearchConfig, find_worst_partition, oracle_supported,
                         oracle_worst_partition)

EXACT_GROUP_LIMIT = 64
NUM_BINS = 15
MAX_DISTRIBUTION_GROUPS = 10 ** 6


@dataclass(frozen=True)
class CalibrationReport:
    notion: str
    gap: float
    epsilon: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"notion": self.notion, "gap": self.gap, "epsilon": self.epsilon,
                "passed": self.passed, "details": self.details}


def _report(notion, gap, epsilon, details):
    gap = float(max(gap, 0.0))
    return CalibrationReport(notion, gap, float(epsilon), bool(gap <= epsilon), details)


def group_ids(values, weights, binning="auto"):
    """Group scalar ``values``: exactly when few distinct values, else equal-mass bins.

    ``binning`` is ``"auto"``, ``"exact"`` or an integer bin count.
    """
    keys = np.round(np.asarray(values, dtype=float), 9)
    uniq, inverse = np.unique(keys, return_inverse=True)
    if binning == "exact" or (binning == "auto" and len(uniq) <= EXACT_GROUP_LIMIT):
        return inverse.ravel()
    bins = NUM_BINS if binning == "auto" else int(binning)
    order = np.argsort(keys, kind="stable")
    cum = np.cumsum(weights[order]) / weights.sum()
    edges = np.minimum((cum * bins).astype(int), bins - 1)
    # equal keys must share a bin
    first = np.searchsorted(keys[order], keys[order], side="left")
    ids = np.empty(len(keys), dtype=int)
    ids[order] = edges[first]
    return ids


def _grouped_abs_gap(ids, weights, observed, predicted):
    """``sum_g W_g |mean_g(observed) - mean_g(predicted)|`` with normalized weights."""
    n = ids.max() + 1
    W = np.bincount(ids, weights=weights, minlength=n)
    obs = np.bincount(ids, weights=weights * observed, minlength=n)
    pred = np.bincount(ids, weights=weights * predicted, minlength=n)
    per_group = np.abs(obs - pred)
    return float(per_group.sum() / W.sum()), W, per_group


def decision_gap(dataset, K, search_config=None, epsilon=0.05, use_oracle=True):
    """Worst ``K``-cell linear-partition miscalibration (sum of cell norms).

    Uses exact enumeration when the instance is small enough, otherwise the
    gradient search snapped to a hard partition.
    """
    if use_oracle and oracle_supported(dataset, K):
        obj = oracle_worst_partition(dataset, K)
        method = "oracle"
    else:
        _, obj = find_worst_partition(dataset, K, search_config or SearchConfig(seed=0))
        method = "search"
    details = {"method": method, "num_actions": K,
               "per_cell_vectors": obj.per_cell_vectors.tolist(),
               "per_cell_mass": obj.per_cell_mass.tolist(),
               "squared_value": obj.squared_value}
    return _report("decision", obj.norm_value, epsilon, details)


def confidence_gap(dataset, binning="auto", epsilon=0.05):
    """Mismatch between top-class accuracy and top-class probability."""
    P = dataset.predictions
    conf = P.max(axis=1)
    correct = (np.argmax(P, axis=1) == dataset.labels).astype(float)
    ids = group_ids(conf, dataset.weights, binning)
    gap, W, per_group = _grouped_abs_gap(ids, dataset.weights, correct, conf)
    return _report("confidence", gap, epsilon, {"num_groups": int(np.count_nonzero(W))})


def classwise_gap(dataset, binning="auto", epsilon=0.05):
    """Largest per-class mismatch between label frequency and ``p_hat_c``."""
    gaps = []
    for c in range(dataset.num_classes):
        pc = dataset.predictions[:, c]
        ids = group_ids(pc, dataset.weights, binning)
        g, _, _ = _grouped_abs_gap(ids, dataset.weights, (dataset.labels == c).astype(float), pc)
        gaps.append(g)
    return _report("classwise", max(gaps), epsilon, {"per_class": gaps})


def distribution_gap(dataset, epsilon=0.05):
    """Weighted L1 distance between each distinct prediction and its label mean."""
    keys = np.round(dataset.predictions, 9)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    if len(uniq) > MAX_DISTRIBUTION_GROUPS:
        raise UnsupportedInstanceError(
            f"{len(uniq)} distinct predictions; distribution calibration is not estimable")
    inverse = inverse.ravel()
    pw = dataset.probabilities
    diff = np.zeros_like(uniq)
    np.add.at(diff, inverse, (dataset.onehot - dataset.predictions) * pw[:, None])
    gap = float(np.abs(diff).sum())
    return _report("distribution", gap, epsilon, {"num_groups": int(len(uniq))})

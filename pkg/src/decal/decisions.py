"""Loss tables, Bayes decision rules and the loss-gap metric."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, LossMatrix


def bayes_decide(loss, q):
    """Action minimizing predicted expected loss ``<q, loss_a>``.

    ``q`` may be one probability vector (returns an int) or an ``(N, C)``
    array (returns an int array). Ties go to the lowest action index.
    """
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != loss.num_classes:
        raise InvalidInputError(
            f"prediction has {q.shape[-1]} classes, loss expects {loss.num_classes}")
    expected = q @ loss.entries.T
    actions = np.argmin(expected, axis=-1)
    return int(actions) if q.ndim == 1 else actions


@dataclass(frozen=True)
class DecisionRule:
    """The Bayes rule induced by ``loss``."""

    loss: LossMatrix

    def decide(self, Q):
        return bayes_decide(self.loss, Q)

    __call__ = decide


def zero_one_loss(C):
    return LossMatrix(1.0 - np.eye(C))


def make_refrain_loss(beta, C):
    """``C + 1`` actions: predict a class (0/1 loss) or abstain at cost ``beta``.

    The abstain action has index ``C``. The Bayes rule picks the argmax class
    when its probability exceeds ``1 - beta`` and abstains otherwise.
    """
    if not 0.0 <= beta <= 1.0:
        raise InvalidInputError("beta must lie in [0, 1]")
    if C < 2:
        raise InvalidInputError("need at least two classes")
    entries = np.vstack([1.0 - np.eye(C), np.full((1, C), float(beta))])
    return LossMatrix(entries)


def make_classwise_loss(c, beta1, beta2, C):
    """Three actions for class ``c``: T (index 0), F (1) and abstain (2).

    ``loss(y, T) = beta1 * [y != c]``, ``loss(y, F) = beta2 * [y == c]`` and
    abstaining always costs 1.
    """
    if C < 2:
        raise InvalidInputError("need at least two classes")
    if not 0 <= c < C:
        raise InvalidInputError(f"class index {c} out of range for C={C}")
    is_c = np.arange(C) == c
    entries = np.vstack([
        beta1 * (~is_c).astype(float),
        beta2 * is_c.astype(float),
        np.ones(C),
    ])
    return LossMatrix(entries)


def _check(dataset, loss):
    if loss.num_classes != dataset.num_classes:
        raise InvalidInputError(
            f"loss has {loss.num_classes} classes, dataset has {dataset.num_classes}")


def _actions(dataset, loss, rule):
    if rule is None:
        rule = DecisionRule(loss)
    actions = np.asarray(rule(dataset.predictions))
    if actions.shape != (dataset.num_samples,):
        raise InvalidInputError("decision rule must return one action per sample")
    if actions.min() < 0 or actions.max() >= loss.num_actions:
        raise InvalidInputError("decision rule returned an action outside the loss table")
    return actions


def expected_loss_simulated(dataset, loss, rule=None):
    """Expected loss if labels were drawn from the predictions themselves.

    ``rule`` maps an ``(N, C)`` prediction array to actions and defaults to
    the Bayes rule of ``loss``.
    """
    _check(dataset, loss)
    a = _actions(dataset, loss, rule)
    per_sample = np.sum(dataset.predictions * loss.entries[a], axis=1)
    return float(dataset.mean(per_sample))


def expected_loss_true(dataset, loss, rule=None):
    """Expected loss against the observed labels."""
    _check(dataset, loss)
    a = _actions(dataset, loss, rule)
    return float(dataset.mean(loss.entries[a, dataset.labels]))


@dataclass(frozen=True)
class LossGapReport:
    simulated_loss: float
    true_loss: float
    gap: float

    def to_dict(self):
        return {"simulated_loss": self.simulated_loss,
                "true_loss": self.true_loss,
                "gap": self.gap}


def loss_gap(dataset, loss):
    """Normalized gap between simulated and true loss under the Bayes rule."""
    norm = loss.sup_norm()
    if norm <= 0:
        raise InvalidInputError("loss gap is undefined for an all-zero loss")
    sim = expected_loss_simulated(dataset, loss)
    true = expected_loss_true(dataset, loss)
    return LossGapReport(sim, true, abs(sim - true) / norm)


def sample_random_losses(K, C, count, seed):
    """``count`` losses with i.i.d. standard normal entries, reproducible per seed."""
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    rng = np.random.default_rng(seed)
    return [LossMatrix(e) for e in rng.standard_normal((count, K, C))]


def batch_loss_metrics(dataset, losses):
    """Vectorized loss statistics for many losses sharing one ``K``.

    Returns ``(simulated, true, gap)`` arrays, one entry per loss, equal to
    what :func:`loss_gap` computes loss by loss.
    """
    L = np.stack([l.entries for l in losses])
    if L.shape[2] != dataset.num_classes:
        raise InvalidInputError("loss and dataset class counts differ")
    P = dataset.predictions
    expected = np.einsum("nc,lkc->lnk", P, L)
    actions = np.argmin(expected, axis=2)
    chosen = np.take_along_axis(expected, actions[:, :, None], axis=2)[:, :, 0]
    simulated = chosen @ dataset.probabilities
    true_per = L[np.arange(len(losses))[:, None], actions, dataset.labels[None, :]]
    true = true_per @ dataset.probabilities
    norms = np.linalg.norm(L, axis=2).max(axis=1)
    if np.any(norms <= 0):
        raise InvalidInputError("loss gap is undefined for an all-zero loss")
    return simulated, true, np.abs(simulated - true) / norms

"""Shared types and numeric primitives.

Predictions are rows of an ``(N, C)`` float array living on the probability
simplex; labels are integer class indices. Everything downstream consumes a
:class:`CalibrationDataset`, which stores only ``(prediction, label, weight)``
triples -- the input features themselves never enter the picture.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIMPLEX_ATOL = 1e-6


class InvalidInputError(ValueError):
    """Raised when arguments violate a documented precondition."""


class UnsupportedInstanceError(ValueError):
    """Raised when an instance is valid but too large for the requested routine."""


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def probability_vector(values, atol=SIMPLEX_ATOL):
    """Validate ``values`` as a point on the simplex and renormalize it.

    Entries must be finite and nonnegative and sum to one within ``atol``;
    anything further off raises instead of being silently repaired.
    """
    q = np.asarray(values, dtype=float)
    if q.ndim != 1 or q.shape[0] < 2:
        raise InvalidInputError("a probability vector needs at least two entries")
    return normalize_rows(q[None, :], atol=atol)[0]


def normalize_rows(P, atol=SIMPLEX_ATOL):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if not np.all(np.isfinite(P)):
        raise InvalidInputError("probabilities must be finite")
    if np.any(P < -atol) or np.any(P > 1 + atol):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    s = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(s - 1.0) > atol)
    if bad.size:
        raise InvalidInputError(
            f"row {bad[0]} sums to {s[bad[0]]:.8g}, not 1 (tolerance {atol:g})")
    # rows already exact to rounding are kept bit-for-bit
    exact = np.all(P >= 0, axis=1) & (np.abs(s - 1.0) <= 64 * np.finfo(float).eps)
    if np.all(exact):
        return P.copy()
    out = np.clip(P, 0.0, None)
    out /= out.sum(axis=1, keepdims=True)
    out[exact] = P[exact]
    return out


def project_to_simplex(v):
    """Euclidean projection onto the probability simplex.

    Works on a single vector or row-wise on a 2-D array. Uses the
    sort-and-threshold method: with ``u`` sorted descending, the threshold is
    ``(cumsum(u)[rho] - 1) / (rho + 1)`` for the largest ``rho`` keeping
    ``u[rho]`` above it. Rows already on the simplex (to rounding) are
    returned unchanged, which makes the map exactly idempotent.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    V = np.atleast_2d(v)
    if not np.all(np.isfinite(V)):
        raise InvalidInputError("cannot project non-finite values")
    n, C = V.shape
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, C + 1)
    rho = np.count_nonzero(U - css / ind > 0, axis=1)
    theta = css[np.arange(n), rho - 1] / rho
    out = np.maximum(V - theta[:, None], 0.0)

    on_simplex = np.all(V >= 0, axis=1) & (np.abs(V.sum(axis=1) - 1.0) <= 4 * C * np.finfo(float).eps)
    out[on_simplex] = V[on_simplex]
    return out[0] if single else out


def pseudo_inverse(M, tol=1e-10):
    """Moore-Penrose inverse of a symmetric positive semi-definite matrix.

    Eigenvalues below ``tol`` times the largest are treated as zero. Raises
    if ``M`` is asymmetric or has a negative eigenvalue beyond that cutoff.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError("pseudo_inverse expects a square matrix")
    scale = max(np.abs(M).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(M - M.T).max(initial=0.0) > tol * scale:
        raise InvalidInputError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh((M + M.T) / 2)
    top = max(vals.max(initial=0.0), 0.0)
    cutoff = tol * top
    if vals.min(initial=0.0) < -max(cutoff, tol * scale):
        raise InvalidInputError("matrix is not positive semi-definite")
    keep = vals > cutoff
    if not np.any(keep):
        return np.zeros_like(M)
    V = vecs[:, keep]
    return (V / vals[keep]) @ V.T


@dataclass(frozen=True)
class LossMatrix:
    """A ``K x C`` loss table with ``entries[a, y]`` = loss of action ``a`` when the label is ``y``."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if e.ndim != 2 or e.shape[1] < 1:
            raise InvalidInputError("loss entries must be a K x C matrix")
        if not np.all(np.isfinite(e)):
            raise InvalidInputError("loss entries must be finite")
        object.__setattr__(self, "entries", _frozen(e))

    @property
    def num_actions(self):
        return self.entries.shape[0]

    @property
    def num_classes(self):
        return self.entries.shape[1]

    def sup_norm(self):
        """Largest Euclidean norm over the action rows."""
        return float(np.linalg.norm(self.entries, axis=1).max())

    def scaled(self, c):
        return LossMatrix(self.entries * c)

    def to_dict(self):
        return {"entries": self.entries.tolist(),
                "num_actions": self.num_actions,
                "num_classes": self.num_classes}

    @classmethod
    def from_dict(cls, d):
        loss = cls(np.asarray(d["entries"], dtype=float))
        if "num_actions" in d and d["num_actions"] != loss.num_actions:
            raise InvalidInputError("num_actions does not match entries")
        if "num_classes" in d and d["num_classes"] != loss.num_classes:
            raise InvalidInputError("num_classes does not match entries")
        return loss


def softmax(Z, axis=-1):
    Z = np.asarray(Z, dtype=float)
    Z = Z - Z.max(axis=axis, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=axis, keepdims=True)


@dataclass(frozen=True)
class PartitionWeights:
    """A partition of the simplex into ``K`` cells scored by ``q @ w.T``.

    ``mode="hard"`` assigns each point to the argmax cell (lowest index on
    ties); ``mode="soft"`` spreads it with a softmax over the scores.
    """

    mode: str
    w: np.ndarray

    def __post_init__(self):
        if self.mode not in ("hard", "soft"):
            raise InvalidInputError(f"unknown partition mode {self.mode!r}")
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("partition weights must be finite")
        object.__setattr__(self, "w", _frozen(w))

    @property
    def num_cells(self):
        return self.w.shape[0]

    def scores(self, Q):
        return np.atleast_2d(Q) @ self.w.T

    def cells(self, Q):
        """Hard cell index of each row of ``Q``."""
        return np.argmax(self.scores(Q), axis=1)

    def memberships(self, Q):
        """``(N, K)`` matrix of cell memberships; rows sum to one."""
        S = self.scores(Q)
        if self.mode == "soft":
            return softmax(S, axis=1)
        B = np.zeros_like(S)
        B[np.arange(S.shape[0]), np.argmax(S, axis=1)] = 1.0
        return B

    def as_mode(self, mode):
        return PartitionWeights(mode, self.w)


@dataclass(frozen=True)
class CalibrationDataset:
    """Weighted ``(prediction, label)`` pairs forming an empirical distribution.

    Predictions are renormalized when each row sums to one within 1e-6; rows
    further off raise :class:`InvalidInputError`. Weights default to one.
    """

    predictions: np.ndarray
    labels: np.ndarray
    weights: np.ndarray = None
    _onehot: np.ndarray = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        P = normalize_rows(self.predictions)
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != P.shape[0]:
            raise InvalidInputError("need exactly one label per prediction")
        if P.shape[0] == 0:
            raise InvalidInputError("dataset is empty")
        if P.shape[1] < 2:
            raise InvalidInputError("need at least two classes")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidInputError("labels must be integer class indices")
        y = y.astype(np.int64)
        if y.min() < 0 or y.max() >= P.shape[1]:
            raise InvalidInputError(f"labels must lie in [0, {P.shape[1]})")
        if self.weights is None:
            wts = np.ones(P.shape[0])
        else:
            wts = np.asarray(self.weights, dtype=float)
            if wts.shape != y.shape:
                raise InvalidInputError("need exactly one weight per sample")
            if not np.all(np.isfinite(wts)) or np.any(wts <= 0):
                raise InvalidInputError("weights must be positive and finite")
        object.__setattr__(self, "predictions", _frozen(P))
        y.setflags(write=False)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "weights", _frozen(wts))
        Y = np.zeros_like(P)
        Y[np.arange(len(y)), y] = 1.0
        object.__setattr__(self, "_onehot", _frozen(Y))

    @property
    def num_classes(self):
        return self.predictions.shape[1]

    @property
    def num_samples(self):
        return self.predictions.shape[0]

    @property
    def total_weight(self):
        return float(self.weights.sum())

    @property
    def onehot(self):
        return self._onehot

    @property
    def probabilities(self):
        """Weights normalized to sum to one."""
        return self.weights / self.weights.sum()

    def mean(self, values):
        """Weighted empirical mean of per-sample ``values`` along axis 0."""
        return np.tensordot(self.probabilities, np.asarray(values, dtype=float), axes=1)

    def residuals(self):
        """Per-sample ``p_hat - y``."""
        return self.predictions - self.onehot

    def l2_error(self):
        return float(self.mean(np.sum(self.residuals() ** 2, axis=1)))

    def accuracy(self):
        return float(self.mean(np.argmax(self.predictions, axis=1) == self.labels))

    def with_predictions(self, P):
        return CalibrationDataset(P, self.labels, self.weights)

    def subset(self, idx):
        idx = np.asarray(idx)
        return CalibrationDataset(self.predictions[idx], self.labels[idx], self.weights[idx])

"""Worst-case partitions of the simplex.

A partition splits predictions into ``K`` cells; its miscalibration is read
off the per-cell residual vectors ``E[(p_hat - y) * b_a]``. Summing their
Euclidean norms gives the quantity certified against a tolerance, and summing
their squares gives the smooth surrogate used for gradient ascent over softmax
partitions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import PartitionWeights, UnsupportedInstanceError, InvalidInputError

ORACLE_MAX_SUPPORT = 16
ORACLE_MAX_CELLS = 3
ORACLE_MAX_LPS = 20000
HARD_CHECK_EVERY = 10
NORM_SMOOTHING = 1e-6
POLISH_ROUNDS = 10


@dataclass(frozen=True)
class PartitionObjective:
    squared_value: float
    norm_value: float
    per_cell_vectors: np.ndarray
    per_cell_mass: np.ndarray


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for :func:`find_worst_partition`.

    Steps move a fixed distance ``step_size`` along the normalized gradient;
    a step that fails to improve is rejected and the distance halved. A
    restart stops after ``steps`` iterations or once its step drops below
    ``min_step``.
    """

    seed: int
    restarts: int = 10
    steps: int = 300
    step_size: float = 0.5
    min_step: float = 1e-3
    init_scale: float = 4.0


def _objective_from_cells(R, mass):
    sq = np.sum(R ** 2, axis=1)
    return PartitionObjective(float(sq.sum()), float(np.sqrt(sq).sum()), R, mass)


def evaluate_objective(dataset, partition):
    """Per-cell residuals of ``dataset`` under ``partition``.

    The predicted label never has to be sampled: its expectation against any
    function of the prediction is just the prediction itself.
    """
    if partition.w.shape[1] != dataset.num_classes:
        raise InvalidInputError("partition weights and dataset disagree on C")
    B = partition.memberships(dataset.predictions)
    pw = dataset.probabilities
    R = (B * pw[:, None]).T @ dataset.residuals()
    mass = B.T @ pw
    return _objective_from_cells(R, mass)


def _soft_value_and_grad(P, E, pw, W, surrogate="squared"):
    """Soft objective and its gradient for a stack of weights ``W`` (R, K, C).

    ``surrogate="norm"`` smooths the summed cell norms as
    ``sum_a sqrt(|R_a|^2 + NORM_SMOOTHING^2)``.
    """
    nr, K, C = W.shape
    Z = (W.reshape(nr * K, C) @ P.T).reshape(nr, K, -1)
    Z -= Z.max(axis=1, keepdims=True)
    B = np.exp(Z)
    B /= B.sum(axis=1, keepdims=True)
    Rc = (B * pw).reshape(nr * K, -1) @ E
    sq = np.sum(Rc.reshape(nr, K, C) ** 2, axis=2)
    if surrogate == "norm":
        n = np.sqrt(sq + NORM_SMOOTHING ** 2)
        value = n.sum(axis=1)
        dR = Rc / n.reshape(nr * K, 1)
    else:
        value = sq.sum(axis=1)
        dR = 2.0 * Rc
    G = ((dR @ E.T) * pw).reshape(nr, K, -1)
    dZ = B * (G - np.sum(B * G, axis=1, keepdims=True))
    grad = (dZ.reshape(nr * K, -1) @ P).reshape(nr, K, C)
    return value, grad


def _hard_values(P, E, pw, W, target="norm"):
    nr, K, C = W.shape
    cells = np.argmax((W.reshape(nr * K, C) @ P.T).reshape(nr, K, -1), axis=1)
    B = cells[:, None, :] == np.arange(K)[None, :, None]
    Rc = (B * pw).reshape(nr * K, -1) @ E
    sq = np.sum(Rc.reshape(nr, K, C) ** 2, axis=2)
    return np.sqrt(sq).sum(axis=1) if target == "norm" else sq.sum(axis=1)


def objective_gradient(dataset, w):
    """Gradient of the soft squared objective with respect to ``w``."""
    w = np.asarray(w, dtype=float)
    _, grad = _soft_value_and_grad(dataset.predictions, dataset.residuals(),
                                   dataset.probabilities, w[None])
    return grad[0]


def canonical_init(dataset, K, scale=4.0):
    """Weights embedding the ``K`` most frequent argmax classes.

    Row ``a`` is ``scale`` times the indicator of the ``a``-th most frequent
    argmax class, so the hard partition groups points by top class. Rows
    beyond ``C`` stay zero.
    """
    C = dataset.num_classes
    freq = np.bincount(np.argmax(dataset.predictions, axis=1),
                       weights=dataset.weights, minlength=C)
    order = np.argsort(-freq, kind="stable")
    w = np.zeros((K, C))
    for a, c in enumerate(order[:K]):
        w[a, c] = scale
    return w


def _ascend(P, E, pw, W, config, surrogate, target):
    """Batched normalized gradient ascent; returns the best hard snapshot per restart."""
    nr = W.shape[0]
    value, grad = _soft_value_and_grad(P, E, pw, W, surrogate)
    best_hard = _hard_values(P, E, pw, W, target)
    best_w = W.copy()
    step = np.full(nr, float(config.step_size))
    active = np.ones(nr, dtype=bool)

    def track_hard():
        h = _hard_values(P, E, pw, W, target)
        better = h > best_hard
        best_hard[better] = h[better]
        best_w[better] = W[better]

    for it in range(config.steps):
        gnorm = np.sqrt(np.sum(grad ** 2, axis=(1, 2)))
        active &= gnorm > 0
        if not active.any():
            break
        move = np.where(active, step / np.where(gnorm > 0, gnorm, 1.0), 0.0)
        W_try = W + move[:, None, None] * grad
        v_try, g_try = _soft_value_and_grad(P, E, pw, W_try, surrogate)
        improved = active & (v_try > value)
        W[improved] = W_try[improved]
        value[improved] = v_try[improved]
        grad[improved] = g_try[improved]
        step[active & ~improved] /= 2.0
        active &= step >= config.min_step

        if it % HARD_CHECK_EVERY == HARD_CHECK_EVERY - 1:
            track_hard()

    track_hard()
    return best_hard, best_w


def _cells_and_scores(P, w):
    S = P @ w.T
    return np.argmax(S, axis=1), S


def _target_value(R, target):
    sq = np.sum(R ** 2, axis=-1)
    return np.sqrt(sq).sum(axis=-1) if target == "norm" else sq.sum(axis=-1)


def _line_search(P, r, w, a, c, target):
    """Exact hard line search along ``w[a, c]``; returns ``(value, t)`` of the best move.

    Every point changes cell at one breakpoint along this coordinate, so the
    objective is piecewise constant and prefix sums give it on every piece.
    """
    K = w.shape[0]
    cells, S = _cells_and_scores(P, w)
    R = np.zeros((K, r.shape[1]))
    np.add.at(R, cells, r)
    best = (_target_value(R, target), 0.0)
    pc = P[:, c]
    s_a = S[:, a]
    for sign in (1.0, -1.0):
        if sign > 0:
            # outsiders join cell a once its score catches up
            movers = np.flatnonzero((cells != a) & (pc > 0))
            if not len(movers):
                continue
            t = (S[movers, cells[movers]] - s_a[movers]) / pc[movers]
            dest = np.full(len(movers), a)
            src = cells[movers]
        else:
            # members leave cell a for their runner-up once it falls behind
            movers = np.flatnonzero((cells == a) & (pc > 0))
            if not len(movers) or K == 1:
                continue
            others = S[movers].copy()
            others[:, a] = -np.inf
            runner = np.argmax(others, axis=1)
            t = -(s_a[movers] - others[np.arange(len(movers)), runner]) / pc[movers]
            dest = runner
            src = np.full(len(movers), a)
        order = np.argsort(sign * t, kind="stable")
        t, dest, src, rr = t[order], dest[order], src[order], r[movers[order]]
        D = np.zeros((len(t), K, r.shape[1]))
        D[np.arange(len(t)), dest] += rr
        D[np.arange(len(t)), src] -= rr
        vals = _target_value(R[None] + np.cumsum(D, axis=0), target)
        # only the last point of a group of equal breakpoints gives a valid piece
        ends = np.append(t[1:] != t[:-1], True)
        vals[~ends] = -np.inf
        j = int(np.argmax(vals))
        if vals[j] > best[0]:
            nxt = t[j + 1] if j + 1 < len(t) else t[j] + sign * max(1.0, abs(t[j]))
            best = (vals[j], 0.5 * (t[j] + nxt))
    return best


def _polish(P, E, pw, w, target, rounds=POLISH_ROUNDS):
    """Coordinate ascent on the hard objective with exact line searches."""
    w = w.copy()
    r = E * pw[:, None]
    K, C = w.shape
    current = _hard_values(P, E, pw, w[None], target)[0]
    for _ in range(rounds):
        improved = False
        for a in range(K):
            for c in range(C):
                value, t = _line_search(P, r, w, a, c, target)
                if t == 0.0 or value <= current * (1 + 1e-12) + 1e-15:
                    continue
                trial = w.copy()
                trial[a, c] += t
                v = _hard_values(P, E, pw, trial[None], target)[0]
                if v > current:
                    w, current, improved = trial, v, True
        if not improved:
            break
    return w


def find_worst_partition(dataset, K, config, stream=0, target="norm"):
    """Search for the linear partition with the largest miscalibration.

    Runs normalized gradient ascent on the soft squared objective from the
    canonical initialization plus ``config.restarts`` random ones. Iterates
    are periodically scored as hard partitions and the best one seen is
    polished by exact coordinate line searches on the hard objective, and
    returned together with its exact objective. ``target`` is what the
    snapshots are ranked by: the summed cell norms (``"norm"``, which also
    repeats the restarts on a smoothed norm objective) or the squared
    objective.
    ``stream`` separates the random streams of successive searches sharing
    one seed.
    """
    if target not in ("norm", "squared"):
        raise InvalidInputError(f"unknown target {target!r}")
    if K < 1:
        raise InvalidInputError("K must be at least 1")
    C = dataset.num_classes
    if K == 1:
        part = PartitionWeights("hard", np.zeros((1, C)))
        return part, evaluate_objective(dataset, part)

    P, E, pw = dataset.predictions, dataset.residuals(), dataset.probabilities
    inits = [canonical_init(dataset, K, config.init_scale)]
    for r in range(config.restarts):
        rng = np.random.default_rng([config.seed, stream, r])
        inits.append(rng.standard_normal((K, C)) / np.sqrt(C))
    W0 = np.stack(inits)

    surrogates = ("squared", "norm") if target == "norm" else ("squared",)
    found = [_ascend(P, E, pw, W0.copy(), config, sur, target) for sur in surrogates]
    best_hard = np.concatenate([f[0] for f in found])
    best_w = np.concatenate([f[1] for f in found])
    winner = int(np.argmax(best_hard))
    part = PartitionWeights("hard", _polish(P, E, pw, best_w[winner], target))
    return part, evaluate_objective(dataset, part)


def _support(dataset):
    """Distinct predictions and their summed weighted residuals."""
    keys = np.round(dataset.predictions, 9)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    M, C = uniq.shape
    resid = np.zeros((M, C))
    mass = np.zeros(M)
    np.add.at(resid, inverse, dataset.residuals() * dataset.probabilities[:, None])
    np.add.at(mass, inverse, dataset.probabilities)
    points = np.zeros((M, C))
    np.add.at(points, inverse, dataset.predictions * dataset.probabilities[:, None])
    return points / mass[:, None], resid, mass


def oracle_supported(dataset, K):
    """Whether :func:`oracle_worst_partition` can handle this instance."""
    try:
        _oracle_plan(dataset, K)
    except UnsupportedInstanceError:
        return False
    return True


def _oracle_plan(dataset, K):
    points, resid, mass = _support(dataset)
    M, C = points.shape
    if M > ORACLE_MAX_SUPPORT:
        raise UnsupportedInstanceError(f"{M} distinct predictions exceeds {ORACLE_MAX_SUPPORT}")
    if K > ORACLE_MAX_CELLS:
        raise UnsupportedInstanceError(f"K={K} exceeds {ORACLE_MAX_CELLS}")
    if K == 1 or M == 1:
        kind = "single"
    elif C == 2:
        kind = "threshold"
    elif C == 3 and K == 2:
        kind = "planar"
    elif K ** M <= ORACLE_MAX_LPS:
        kind = "lp"
    else:
        raise UnsupportedInstanceError(f"{K}^{M} labelings is too many to enumerate")
    return kind, points, resid, mass


def _best_over(assignments, resid, mass, K):
    best = None
    for cells in assignments:
        R = np.zeros((K, resid.shape[1]))
        m = np.zeros(K)
        np.add.at(R, cells, resid)
        np.add.at(m, cells, mass)
        obj = _objective_from_cells(R, m)
        if best is None or obj.norm_value > best.norm_value:
            best = obj
    return best


def _threshold_assignments(points, K):
    order = np.argsort(points[:, 0], kind="stable")
    M = len(order)
    for k in range(1, min(K, M) + 1):
        for cuts in itertools.combinations(range(1, M), k - 1):
            cells = np.empty(M, dtype=int)
            for a, (lo, hi) in enumerate(zip((0,) + cuts, cuts + (M,))):
                cells[order[lo:hi]] = a
            yield cells


def _planar_assignments(points):
    # affine functions on the 2-simplex are affine in the last two coordinates
    xy = points[:, 1:3]
    M = len(xy)
    angles = []
    for i, j in itertools.combinations(range(M), 2):
        d = xy[j] - xy[i]
        phi = np.arctan2(d[1], d[0]) + np.pi / 2
        angles.extend([phi % (2 * np.pi), (phi + np.pi) % (2 * np.pi)])
    angles = np.unique(np.round(angles, 12))
    mids = (angles + np.roll(angles, -1)) / 2
    mids[-1] = (angles[-1] + angles[0] + 2 * np.pi) / 2
    seen = set()
    for theta in mids:
        proj = xy @ np.array([np.cos(theta), np.sin(theta)])
        order = np.argsort(proj, kind="stable")
        for k in range(M + 1):
            cells = np.ones(M, dtype=int)
            cells[order[:k]] = 0
            key = cells.tobytes()
            if key not in seen:
                seen.add(key)
                yield cells


def _linearly_realizable(points, cells, K):
    """LP feasibility of a strict argmax-linear labelling."""
    M, C = points.shape
    rows = []
    for i in range(M):
        for b in range(K):
            if b == cells[i]:
                continue
            row = np.zeros((K, C))
            row[cells[i]] -= points[i]
            row[b] += points[i]
            rows.append(row.ravel())
    res = linprog(np.zeros(K * C), A_ub=np.array(rows), b_ub=-np.ones(len(rows)),
                  bounds=[(None, None)] * (K * C), method="highs")
    return res.status == 0


def _lp_assignments(points, K):
    M = len(points)
    for labels in itertools.product(range(K), repeat=M):
        # cells are interchangeable: keep labellings in first-appearance order
        nxt = 0
        canonical = True
        for a in labels:
            if a > nxt:
                canonical = False
                break
            if a == nxt:
                nxt += 1
        if not canonical:
            continue
        cells = np.array(labels)
        if _linearly_realizable(points, cells, K):
            yield cells


def oracle_worst_partition(dataset, K):
    """Exact worst hard linear partition by enumeration (small instances only).

    Raises :class:`UnsupportedInstanceError` for more than 16 distinct
    predictions, more than 3 cells, or too many candidate labellings.
    """
    kind, points, resid, mass = _oracle_plan(dataset, K)
    M = len(points)
    if kind == "single":
        return _best_over([np.zeros(M, dtype=int)], resid, mass, K)
    if kind == "threshold":
        gen = _threshold_assignments(points, K)
    elif kind == "planar":
        gen = _planar_assignments(points)
    else:
        gen = _lp_assignments(points, K)
    return _best_over(gen, resid, mass, K)

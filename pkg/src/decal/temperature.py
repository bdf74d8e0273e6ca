"""Temperature scaling baseline."""
from __future__ import annotations

import numpy as np
from scipy.optimize import golden
from scipy.special import log_softmax

from .core import CalibrationDataset, softmax


def nll(logits, labels, t, weights=None):
    lp = log_softmax(np.asarray(logits) / t, axis=1)
    per = -lp[np.arange(len(labels)), labels]
    return float(np.average(per, weights=weights))


def temperature_grid(lo=0.05, hi=20.0, num=200):
    return np.geomspace(lo, hi, num)


def temperature_scale(logits, labels, weights=None, grid=None, tol=1e-4):
    """Fit one temperature by weighted NLL; return ``(t, rescaled dataset)``.

    The grid minimum (first one on ties) is refined by golden-section search
    between its neighbours when it is a strict interior minimum.
    """
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    grid = temperature_grid() if grid is None else np.asarray(grid, dtype=float)
    losses = np.array([nll(logits, labels, t, weights) for t in grid])
    i = int(np.argmin(losses))
    t = float(grid[i])
    if 0 < i < len(grid) - 1 and losses[i] < losses[i - 1] and losses[i] < losses[i + 1]:
        t = float(golden(lambda s: nll(logits, labels, s, weights),
                         brack=(grid[i - 1], grid[i], grid[i + 1]), tol=tol / (2 * t)))
    return t, CalibrationDataset(softmax(logits / t, axis=1), labels, weights)

import numpy as np
import pytest

from decal import CalibrationDataset


def grouped_dataset(points, label_means, masses=None):
    """Weighted dataset where each point's labels have exactly the given mean."""
    points = np.asarray(points, dtype=float)
    label_means = np.asarray(label_means, dtype=float)
    M, C = points.shape
    masses = np.full(M, 1.0 / M) if masses is None else np.asarray(masses, dtype=float)
    P, y, w = [], [], []
    for q, m, mass in zip(points, label_means, masses):
        for c in range(C):
            if m[c] > 0:
                P.append(q)
                y.append(c)
                w.append(mass * m[c])
    return CalibrationDataset(np.array(P), np.array(y), np.array(w))


@pytest.fixture
def two_cell():
    return grouped_dataset([[0.9, 0.1], [0.1, 0.9]], [[0.7, 0.3], [0.3, 0.7]])


@pytest.fixture
def constant_at_mean():
    rng = np.random.default_rng(3)
    y = rng.integers(0, 3, size=200)
    mean = np.bincount(y, minlength=3) / len(y)
    return CalibrationDataset(np.tile(mean, (len(y), 1)), y)

import numpy as np
import pytest

from decal import Distortion, InvalidInputError, SearchConfig, decision_gap, generate_synthetic
from decal.io import dataset_to_csv

# frozen output of this generator at seed 0, C=3, N=50000
TEMPERATURE_HALF_GAP = 0.11323406672649841


def test_identity_is_decision_calibrated():
    ds, truth = generate_synthetic(3, 50000, 1.0, "identity", seed=0)
    np.testing.assert_array_equal(ds.predictions, truth)
    assert decision_gap(ds, 2, SearchConfig(seed=0)).gap <= 0.02


def test_overconfident_is_not():
    ds, _ = generate_synthetic(3, 50000, 1.0, "temperature:0.5", seed=0)
    gap = decision_gap(ds, 2, SearchConfig(seed=0)).gap
    assert gap > 0.05
    assert gap == pytest.approx(TEMPERATURE_HALF_GAP, rel=1e-9)


def test_same_seed_same_bytes():
    a, _ = generate_synthetic(4, 300, 0.5, "swap:0:1:0.3", seed=9)
    b, _ = generate_synthetic(4, 300, 0.5, "swap:0:1:0.3", seed=9)
    assert dataset_to_csv(a) == dataset_to_csv(b)
    c, _ = generate_synthetic(4, 300, 0.5, "swap:0:1:0.3", seed=10)
    assert dataset_to_csv(a) != dataset_to_csv(c)


def test_labels_follow_truth():
    ds, truth = generate_synthetic(3, 40000, 1.0, "identity", seed=1)
    freq = np.bincount(ds.labels, minlength=3) / 40000
    # standard error about 0.0024 per class
    np.testing.assert_allclose(freq, truth.mean(axis=0), atol=0.012)


def test_distortions():
    P = np.array([[0.6, 0.3, 0.1]])
    sharp = Distortion.parse("temperature:0.5")(P)
    np.testing.assert_allclose(sharp, [[0.36, 0.09, 0.01]] / np.float64(0.46))
    swapped = Distortion.parse("swap:0:2:0.5")(P)
    np.testing.assert_allclose(swapped, [[0.3, 0.3, 0.4]])
    assert str(Distortion.parse("swap:0:2:0.5")) == "swap:0:2:0.5"


@pytest.mark.parametrize("spec", ["temperature", "swap:0:0:0.5", "warp:1", "temperature:-1",
                                  "swap:0:5:0.1", "swap:0:1:2"])
def test_bad_distortions(spec):
    with pytest.raises(InvalidInputError):
        generate_synthetic(3, 10, 1.0, spec)

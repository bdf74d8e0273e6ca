import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decal import (CalibrationDataset, PartitionWeights, SearchConfig, UnsupportedInstanceError,
                   evaluate_objective, find_worst_partition, objective_gradient,
                   oracle_worst_partition)
from decal.partitions import canonical_init

from conftest import grouped_dataset

SEPARATOR = np.array([[1.0, 0.0], [0.0, 1.0]])


def random_dataset(seed, C=3, N=60, distinct=None):
    rng = np.random.default_rng(seed)
    if distinct:
        support = rng.dirichlet(np.ones(C), size=distinct)
        P = support[rng.integers(0, distinct, N)]
    else:
        P = rng.dirichlet(np.ones(C), size=N)
    return CalibrationDataset(P, rng.integers(0, C, N), rng.uniform(0.5, 2, N))


def test_two_cell_objective(two_cell):
    obj = evaluate_objective(two_cell, PartitionWeights("hard", SEPARATOR))
    np.testing.assert_allclose(sorted(obj.per_cell_vectors.tolist()),
                               [[-0.1, 0.1], [0.1, -0.1]], atol=1e-12)
    assert obj.norm_value == pytest.approx(0.2 * np.sqrt(2), abs=1e-12)
    assert obj.squared_value == pytest.approx(0.04, abs=1e-12)
    np.testing.assert_allclose(obj.per_cell_mass, [0.5, 0.5])


def test_constant_at_mean_is_zero(constant_at_mean):
    rng = np.random.default_rng(0)
    for mode in ("hard", "soft"):
        obj = evaluate_objective(constant_at_mean, PartitionWeights(mode, rng.normal(size=(3, 3))))
        assert obj.norm_value < 1e-12


def test_soft_at_zero_is_uniform():
    ds = random_dataset(1)
    obj = evaluate_objective(ds, PartitionWeights("soft", np.zeros((3, 3))))
    mean = ds.mean(ds.residuals())
    for v in obj.per_cell_vectors:
        np.testing.assert_allclose(v, mean / 3, atol=1e-12)


def test_soft_limit_matches_hard(two_cell):
    obj = evaluate_objective(two_cell, PartitionWeights("soft", 1e3 * SEPARATOR))
    assert obj.norm_value == pytest.approx(0.2 * np.sqrt(2), abs=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(seed, C=int(rng.integers(2, 6)), N=40)
    K = int(rng.integers(2, 5))
    w = rng.normal(size=(K, ds.num_classes))
    g = objective_gradient(ds, w)
    f = lambda w_: evaluate_objective(ds, PartitionWeights("soft", w_)).squared_value
    fd = np.zeros_like(w)
    h = 1e-5
    for idx in np.ndindex(*w.shape):
        e = np.zeros_like(w)
        e[idx] = h
        fd[idx] = (f(w + e) - f(w - e)) / (2 * h)
    assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)


def test_gradient_zero_when_calibrated(constant_at_mean):
    g = objective_gradient(constant_at_mean, np.random.default_rng(0).normal(size=(2, 3)))
    assert np.abs(g).max() < 1e-12


def test_gradient_orthogonal_to_common_shift():
    ds = random_dataset(4)
    w = np.random.default_rng(4).normal(size=(3, 3))
    shift = np.tile(np.random.default_rng(5).normal(size=3), (3, 1))
    a = evaluate_objective(ds, PartitionWeights("soft", w)).squared_value
    b = evaluate_objective(ds, PartitionWeights("soft", w + shift)).squared_value
    assert a == pytest.approx(b, abs=1e-12)
    assert abs(np.sum(objective_gradient(ds, w) * shift)) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 5), st.sampled_from(["hard", "soft"]))
def test_cauchy_schwarz_bounds(seed, K, mode):
    ds = random_dataset(seed, N=30)
    w = np.random.default_rng(seed).normal(size=(K, 3))
    obj = evaluate_objective(ds, PartitionWeights(mode, w))
    n2 = obj.norm_value ** 2
    assert obj.squared_value <= n2 + 1e-12
    assert n2 <= K * obj.squared_value + 1e-12
    assert obj.per_cell_mass.sum() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_hard_objective_invariances(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(seed, N=30)
    w = rng.normal(size=(3, 3))
    base = evaluate_objective(ds, PartitionWeights("hard", w))
    scaled = w * rng.uniform(0.1, 10)
    shifted = w + rng.normal(size=3)
    for w2 in (scaled, shifted):
        other = evaluate_objective(ds, PartitionWeights("hard", w2))
        assert other.norm_value == pytest.approx(base.norm_value, abs=1e-12)


def test_per_row_rescaling_can_move_cells():
    ds = grouped_dataset([[0.6, 0.4], [0.45, 0.55]], [[0.2, 0.8], [0.9, 0.1]])
    w = np.eye(2)
    a = evaluate_objective(ds, PartitionWeights("hard", w)).per_cell_mass
    b = evaluate_objective(ds, PartitionWeights("hard", w * [[1.0], [2.0]])).per_cell_mass
    assert not np.allclose(a, b)


def test_search_finds_two_cell_separator(two_cell):
    part, obj = find_worst_partition(two_cell, 2, SearchConfig(seed=0))
    assert part.mode == "hard"
    assert obj.squared_value >= 0.04 - 1e-6


def test_search_single_cell():
    ds = random_dataset(7)
    _, obj = find_worst_partition(ds, 1, SearchConfig(seed=0))
    assert obj.norm_value == pytest.approx(np.linalg.norm(ds.mean(ds.residuals())), abs=1e-12)


def test_search_is_deterministic():
    ds = random_dataset(8)
    a = find_worst_partition(ds, 3, SearchConfig(seed=5))
    b = find_worst_partition(ds, 3, SearchConfig(seed=5))
    np.testing.assert_array_equal(a[0].w, b[0].w)
    assert a[1].norm_value == b[1].norm_value


@pytest.mark.parametrize("seed", range(5))
def test_search_beats_its_initializations(seed):
    ds = random_dataset(seed, C=4, N=80)
    cfg = SearchConfig(seed=seed, restarts=4)
    _, obj = find_worst_partition(ds, 3, cfg)
    inits = [canonical_init(ds, 3, cfg.init_scale)]
    for r in range(cfg.restarts):
        inits.append(np.random.default_rng([seed, 0, r]).standard_normal((3, 4)) / 2)
    for w in inits:
        assert obj.squared_value >= evaluate_objective(ds, PartitionWeights("hard", w)).squared_value - 1e-12


def brute_force_c2(ds, K):
    """Best hard norm value over a dense sweep of w for C=2 (thresholds on p0)."""
    p0 = ds.predictions[:, 0]
    cuts = np.unique(np.round(p0, 9))
    mids = np.concatenate([[-1], (cuts[:-1] + cuts[1:]) / 2, [2]])
    best = 0.0
    import itertools
    for t in itertools.combinations(mids, K - 1):
        cells = np.searchsorted(np.array(t), p0)
        for labeling in itertools.permutations(range(K)):
            B = np.eye(K)[np.array(labeling)[cells]]
            R = (B * ds.probabilities[:, None]).T @ ds.residuals()
            best = max(best, np.linalg.norm(R, axis=1).sum())
    return best


@pytest.mark.parametrize("seed", range(8))
def test_oracle_matches_threshold_brute_force(seed):
    ds = random_dataset(seed, C=2, N=50, distinct=8)
    assert oracle_worst_partition(ds, 2).norm_value == pytest.approx(brute_force_c2(ds, 2), abs=1e-12)
    assert oracle_worst_partition(ds, 3).norm_value == pytest.approx(brute_force_c2(ds, 3), abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_oracle_dominates_random_hard_partitions_c3(seed):
    ds = random_dataset(seed, C=3, N=60, distinct=7)
    rng = np.random.default_rng(seed)
    for K in (2, 3):
        exact = oracle_worst_partition(ds, K).norm_value
        sampled = max(evaluate_objective(ds, PartitionWeights("hard", rng.normal(size=(K, 3)))).norm_value
                      for _ in range(3000))
        assert sampled <= exact + 1e-12
        # random sampling can miss thin regions, so only demand it gets close
        assert sampled >= 0.95 * exact - 1e-9


def test_oracle_examples(two_cell, constant_at_mean):
    assert oracle_worst_partition(two_cell, 2).norm_value == pytest.approx(0.2 * np.sqrt(2), abs=1e-9)
    assert oracle_worst_partition(constant_at_mean, 2).norm_value < 1e-12
    single = grouped_dataset([[0.6, 0.4]], [[0.5, 0.5]])
    for K in (1, 2, 3):
        assert oracle_worst_partition(single, K).norm_value == pytest.approx(0.1 * np.sqrt(2), abs=1e-12)


def test_oracle_rejects_large_instances():
    with pytest.raises(UnsupportedInstanceError):
        oracle_worst_partition(random_dataset(0, N=40), 2)
    with pytest.raises(UnsupportedInstanceError):
        oracle_worst_partition(random_dataset(0, C=2, N=40, distinct=5), 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["norm", "squared"]))
def test_line_search_is_exact(seed, target):
    from decal.partitions import _line_search
    rng = np.random.default_rng(seed)
    ds = random_dataset(seed, C=3, N=25, distinct=8)
    w = rng.normal(size=(3, 3))
    a, c = int(rng.integers(3)), int(rng.integers(3))
    r = ds.residuals() * ds.probabilities[:, None]
    value, t = _line_search(ds.predictions, r, w, a, c, target)

    def at(step):
        w2 = w.copy()
        w2[a, c] += step
        obj = evaluate_objective(ds, PartitionWeights("hard", w2))
        return obj.norm_value if target == "norm" else obj.squared_value

    assert at(t) == pytest.approx(value, abs=1e-12)
    sweep = max(at(s) for s in np.linspace(-20, 20, 4001))
    assert value >= sweep - 1e-12


def test_search_exact_on_threshold_instances():
    for seed in range(10):
        ds = random_dataset(seed, C=2, N=100, distinct=12)
        _, obj = find_worst_partition(ds, 2, SearchConfig(seed=seed))
        assert obj.norm_value == pytest.approx(oracle_worst_partition(ds, 2).norm_value, abs=1e-12)


def test_search_target_validation(two_cell):
    with pytest.raises(ValueError):
        find_worst_partition(two_cell, 2, SearchConfig(seed=0), target="max")
    _, sq = find_worst_partition(two_cell, 2, SearchConfig(seed=0), target="squared")
    assert sq.squared_value == pytest.approx(0.04, abs=1e-12)

"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import json
import math
import time

import numpy as np
import pytest

from decal import (CalibrationDataset, ExperimentConfig, PartitionWeights, RecalibrationModel,
                   SearchConfig, classwise_gap, compress_for_loss, confidence_gap, decision_gap,
                   distribution_gap, evaluate_objective, find_worst_partition, objective_gradient,
                   oracle_worst_partition, recalibrate, run_experiment, sample_random_losses)
from decal.decisions import bayes_decide
from decal.experiment import prepare, step_metrics

from conftest import grouped_dataset

EPS = 0.05
GRID = [(C, K) for C in (3, 7) for K in (2, 3, 5)]


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return report


def config(C, K):
    return ExperimentConfig(seed=0, num_actions=K, epsilon=EPS, num_random_losses=50,
                            num_classes=C, num_samples=20000, distortion="temperature:0.5",
                            mode="soft")


@pytest.fixture(scope="module")
def runs():
    out = {}
    for C, K in GRID:
        start = time.perf_counter()
        out[C, K] = (run_experiment(config(C, K)), time.perf_counter() - start)
    return out


def test_criterion_1_two_cell(verdict):
    start = time.perf_counter()
    ds = grouped_dataset([[0.9, 0.1], [0.1, 0.9]], [[0.7, 0.3], [0.3, 0.7]])
    gap = decision_gap(ds, 2)
    model, trace = recalibrate(ds, 2, 0.01, "hard", SearchConfig(seed=0))
    after = decision_gap(ds.with_predictions(trace.predictions), 2).gap
    elapsed = time.perf_counter() - start
    ok = (gap.details["method"] == "oracle" and abs(gap.gap - 0.2 * math.sqrt(2)) <= 1e-6
          and trace.num_iterations == 1
          and np.allclose(model.apply([0.9, 0.1]), [0.7, 0.3], atol=1e-12, rtol=0)
          and np.allclose(model.apply([0.1, 0.9]), [0.3, 0.7], atol=1e-12, rtol=0)
          and after <= 1e-9 and elapsed < 1)
    verdict(1, ok, f"gap={gap.gap:.6f} iterations={trace.num_iterations} "
                   f"final_gap={after:.2e} time={elapsed:.2f}s")


def test_criterion_2_convergence(runs, verdict):
    lines, ok = [], True
    for (C, K), (rep, secs) in runs.items():
        cap = math.ceil(8 * K / EPS ** 2)
        iters = len(rep.steps) - 1
        cal, _, _, _ = prepare(config(C, K))
        model = RecalibrationModel.from_dict(rep.model)
        final = cal.with_predictions(model.apply(cal.predictions))
        certified = max(rep.trace["norm_value"][-1],
                        decision_gap(final, K, SearchConfig(seed=1)).gap)
        good = (rep.termination_reason == "tolerance_met" and iters <= cap
                and certified <= EPS and secs < 60)
        ok &= good
        lines.append(f"C={C},K={K}: iters={iters} gap={certified:.4f} {secs:.1f}s")
    verdict(2, ok, "; ".join(lines))


def test_criterion_3_l2_monotone(runs, verdict):
    ok = True
    for rep, _ in runs.values():
        l2 = rep.trace["l2_error"]
        ok &= all(b <= a + 1e-9 for a, b in zip(l2, l2[1:])) and l2[-1] <= l2[0]
    drops = [f"{rep.trace['l2_error'][0]:.4f}->{rep.trace['l2_error'][-1]:.4f}"
             for rep, _ in runs.values()]
    verdict(3, ok, " ".join(drops))


def test_criterion_4_oracle_equivalence(verdict):
    rng = np.random.default_rng(123)
    worst = 0.0
    ok = True
    for i in range(50):
        M = int(rng.integers(2, 13))
        support = rng.dirichlet(np.ones(2), size=M)
        n = int(rng.integers(20, 200))
        ds = CalibrationDataset(support[rng.integers(0, M, n)], rng.integers(0, 2, n),
                                rng.uniform(0.2, 1, n))
        exact = oracle_worst_partition(ds, 2).norm_value
        _, found = find_worst_partition(ds, 2, SearchConfig(seed=i))
        err = abs(found.norm_value - exact)
        ok &= err <= max(1e-3, 0.05 * exact)
        worst = max(worst, err / max(exact, 1e-12))
    verdict(4, ok, f"50 instances, worst relative deviation {worst:.2e}")


def test_criterion_5_gradient(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        C, K, n = int(rng.integers(2, 7)), int(rng.integers(2, 6)), int(rng.integers(10, 100))
        ds = CalibrationDataset(rng.dirichlet(np.ones(C), n), rng.integers(0, C, n),
                                rng.uniform(0.5, 2, n))
        w = rng.normal(size=(K, C))
        g = objective_gradient(ds, w)
        fd = np.zeros_like(w)
        for idx in np.ndindex(*w.shape):
            e = np.zeros_like(w)
            e[idx] = 1e-5
            f = lambda v: evaluate_objective(ds, PartitionWeights("soft", v)).squared_value
            fd[idx] = (f(w + e) - f(w - e)) / 2e-5
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    verdict(5, worst <= 1e-4, f"worst relative error {worst:.2e}")


def test_criterion_6_hierarchy(verdict):
    rng = np.random.default_rng(0)
    y = rng.integers(0, 3, 500)
    const = CalibrationDataset(np.tile(np.bincount(y, minlength=3) / 500, (500, 1)), y)
    const_gaps = [decision_gap(const, 3).gap, confidence_gap(const).gap,
                  classwise_gap(const).gap, distribution_gap(const).gap]
    x = 0.7
    counter = grouped_dataset([[0.4, 0.4, 0.2], [0.4, 0.2, 0.4], [0.2, 0.4, 0.4]],
                              [[x, 0.8 - x, 0.2], [0.8 - x, 0.2, x], [0.2, x, 0.8 - x]])
    cw = classwise_gap(counter).gap
    dg = decision_gap(counter, 3).gap
    ok = max(const_gaps) <= 1e-9 and cw <= 1e-9 and dg >= 0.1
    verdict(6, ok, f"constant max gap={max(const_gaps):.1e}; counterexample classwise={cw:.1e} "
                   f"decision(K=3)={dg:.5f}")


def test_criterion_7_loss_gap_trend(runs, verdict):
    lines, ok = [], True
    for (C, K), (rep, _) in runs.items():
        gap, loss = rep.test["avg_loss_gap"], rep.test["avg_decision_loss"]
        good = gap[-1] < gap[0] and loss[-1] <= loss[0] + 1e-3
        ok &= good
        lines.append(f"C={C},K={K}: gap {gap[0]:.4f}->{gap[-1]:.4f} loss {loss[0]:.4f}->{loss[-1]:.4f}")
    verdict(7, ok, "; ".join(lines))


def test_criterion_8_compression(runs, verdict):
    worst_gap, ok = 0.0, True
    for (C, K), (rep, _) in runs.items():
        cal, _, _, _ = prepare(config(C, K))
        model = RecalibrationModel.from_dict(rep.model)
        cal = cal.with_predictions(model.apply(cal.predictions))
        for loss in sample_random_losses(K, C, 20, seed=[C, K, 8]):
            comp = compress_for_loss(cal, loss)
            before = bayes_decide(loss, cal.predictions)
            after = bayes_decide(loss, comp(cal.predictions))
            gap = distribution_gap(comp.apply_to(cal)).gap
            worst_gap = max(worst_gap, gap)
            ok &= comp.support_size <= K and np.array_equal(before, after) and gap <= EPS + 0.02
    verdict(8, ok, f"worst compressed distribution gap {worst_gap:.4f} (limit {EPS + 0.02})")


def test_criterion_9_determinism(runs, verdict):
    rep, _ = runs[3, 2]
    again = run_experiment(config(3, 2))
    same_bytes = again.to_json() == rep.to_json()
    model = RecalibrationModel.from_json(json.dumps(rep.model))
    round_trip = RecalibrationModel.from_json(model.to_json()).to_dict() == rep.model
    _, test, losses, _ = prepare(config(3, 2))
    m = step_metrics(test.with_predictions(model.apply(test.predictions)), losses)
    exact = all(m[k] == rep.test[k][-1] for k in m)
    verdict(9, same_bytes and round_trip and exact,
            f"identical bytes={same_bytes} model round-trip={round_trip} metrics exact={exact}")

"""
Four ways to ask whether probabilities are honest
=================================================

Classwise calibration looks at one class at a time. Here it is perfect while
the joint predictions are still badly off for a three-action decision.
"""
import decal

points = [[0.4, 0.4, 0.2], [0.4, 0.2, 0.4], [0.2, 0.4, 0.4]]
# label counts per point, 10 samples each
counts = [[7, 1, 2], [1, 2, 7], [2, 7, 1]]
P, y = [], []
for p, row in zip(points, counts):
    for c, n in enumerate(row):
        P += [p] * n
        y += [c] * n
ds = decal.CalibrationDataset(P, y)

for report in (decal.confidence_gap(ds), decal.classwise_gap(ds),
               decal.decision_gap(ds, 3), decal.distribution_gap(ds)):
    print("%-12s gap %.4f  passed=%s" % (report.notion, report.gap, report.passed))

# compressing predictions for one loss gives a predictor with at most K values
# that leaves every decision of that loss unchanged
loss = decal.sample_random_losses(3, 3, 1, seed=4)[0]
comp = decal.compress_for_loss(ds, loss)
print(comp.support_size, "distinct predictions after compression")

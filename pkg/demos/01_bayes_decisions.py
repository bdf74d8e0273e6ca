"""
Bayes decisions and the loss gap
================================

A predictor is useful to a decision maker when the loss it promises is the
loss actually paid. This walks through that comparison on a tiny dataset.
"""
import numpy as np
import decal

# two kinds of inputs, each predicted too confidently
ds = decal.CalibrationDataset(
    predictions=[[0.9, 0.1]] * 10 + [[0.1, 0.9]] * 10,
    labels=[0] * 7 + [1] * 3 + [0] * 3 + [1] * 7,
)

loss = decal.zero_one_loss(2)
print(decal.bayes_decide(loss, ds.predictions[:3]))
# -> [0 0 0]

# the predictor expects 10% error and gets 30%
report = decal.loss_gap(ds, loss)
print(report.simulated_loss, report.true_loss, report.gap)

# abstaining costs 0.3; below 70% confidence we would rather refrain
refrain = decal.make_refrain_loss(0.3, 2)
print(decal.bayes_decide(refrain, [[0.8, 0.2], [0.6, 0.4]]))
# -> [0 2]

# random losses give a picture across many decision makers
losses = decal.sample_random_losses(3, 2, 200, seed=0)
sim, true, gap = decal.batch_loss_metrics(ds, losses)
print("average gap %.3f, worst %.3f" % (gap.mean(), gap.max()))

"""
Recalibrating an over-confident model
=====================================
"""
import numpy as np
import decal

ds, _ = decal.generate_synthetic(5, 8000, distortion="temperature:0.5", seed=1)
cal = ds.subset(np.arange(6000))
test = ds.subset(np.arange(6000, 8000))

print("before:", decal.decision_gap(test, 2).gap)

model, trace = decal.recalibrate(cal, K=2, epsilon=0.05, mode="soft")
print(trace.termination_reason, "after", trace.num_iterations, "rounds")

# squared error on the calibration split can only go down
print(np.round(trace.l2_error, 4))

fixed = test.with_predictions(model.apply(test.predictions))
print("after: ", decal.decision_gap(fixed, 2).gap)

# models are plain JSON
again = decal.RecalibrationModel.from_json(model.to_json())
assert np.array_equal(again.apply(test.predictions), fixed.predictions)

# hard mode uses argmax cells and per-cell average shifts
hard_model, hard_trace = decal.recalibrate(cal, K=2, epsilon=0.05, mode="hard")
print("hard rounds:", hard_trace.num_iterations)

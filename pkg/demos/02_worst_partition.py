"""
Looking for miscalibration
==========================

Decision calibration fails exactly when some linear split of the simplex
into K cells has cells whose average prediction disagrees with the average
label. The search below finds such a split.
"""
import numpy as np
import decal

ds, truth = decal.generate_synthetic(4, 5000, distortion="temperature:0.5", seed=3)

part, obj = decal.find_worst_partition(ds, 3, decal.SearchConfig(seed=0))
print("norm value   ", obj.norm_value)
print("cell masses  ", np.round(obj.per_cell_mass, 3))

# which cell each prediction falls in
cells = part.cells(ds.predictions)
print(np.bincount(cells, minlength=3))

# the same data without distortion is close to calibrated
clean = ds.with_predictions(truth)
print("clean data   ", decal.decision_gap(clean, 3).gap)

# on a handful of distinct predictions the exact answer is available
small = decal.CalibrationDataset([[0.9, 0.1], [0.9, 0.1], [0.1, 0.9], [0.1, 0.9]], [0, 1, 1, 1])
print(decal.oracle_worst_partition(small, 2).norm_value)
print(decal.decision_gap(small, 2).details["method"])
# -> oracle

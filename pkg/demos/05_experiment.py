"""
Loss gaps over recalibration steps
==================================

Generates data, recalibrates on one split and tracks decision metrics for
random losses on both splits after every step.
"""
import decal

config = decal.ExperimentConfig(num_classes=5, num_samples=6000, num_actions=3,
                                num_random_losses=100, temperature_scaling=True)
scaled = decal.run_experiment(config)

# a pure temperature distortion is undone by temperature scaling alone
print("fitted temperature %.3f, steps %s" % (scaled.temperature, scaled.steps))

config = decal.ExperimentConfig(num_classes=5, num_samples=6000, num_actions=3,
                                num_random_losses=100, distortion="swap:0:1:0.4")
report = decal.run_experiment(config)
print("step  avg gap  worst gap  accuracy")
for s in report.steps:
    print("%4d  %7.4f  %9.4f  %8.4f" % (s, report.test["avg_loss_gap"][s],
                                        report.test["worst_loss_gap"][s],
                                        report.test["accuracy"][s]))

# per-step table for plotting
with open("experiment_steps.csv", "w") as fh:
    fh.write(report.to_csv())

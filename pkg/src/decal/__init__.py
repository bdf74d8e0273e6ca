"""Decision calibration for multi-class probabilistic predictors.

Verify that predicted probabilities give honest expected-loss estimates to
every decision maker with ``K`` actions, and recalibrate them until they do.
"""
from .core import (CalibrationDataset, InvalidInputError, LossMatrix, PartitionWeights,
                   UnsupportedInstanceError, normalize_rows, probability_vector,
                   project_to_simplex, pseudo_inverse, softmax)
from .decisions import (DecisionRule, LossGapReport, bayes_decide, batch_loss_metrics,
                        expected_loss_simulated, expected_loss_true, loss_gap,
                        make_classwise_loss, make_refrain_loss, sample_random_losses,
                        zero_one_loss)
from .partitions import (PartitionObjective, SearchConfig, evaluate_objective,
                         find_worst_partition, objective_gradient, oracle_worst_partition)
from .recalibration import (CompressedPredictor, Layer, RecalibrationModel, TrainTrace,
                            compress_for_loss, recalibrate)
from .checks import (CalibrationReport, classwise_gap, confidence_gap, decision_gap,
                     distribution_gap)
from .synthetic import Distortion, generate_synthetic
from .temperature import temperature_scale
from .io import load_dataset, save_dataset
from .experiment import ExperimentConfig, ExperimentReport, run_experiment

__version__ = "0.1.0"

"""Cross-validated training, predictors, and evaluation."""

from confae.train.folds import Fold, split_folds, split_indices
from confae.train.predictor import Predictor, fit_predictor
from confae.train.trainer import (
    ConfounderMetrics,
    FoldHistory,
    MetricsReport,
    RunArtifacts,
    evaluate,
    format_summary_table,
    run_experiment,
    train_fold,
    train_step_ssl,
)

__all__ = [
    "Fold", "split_folds", "split_indices", "Predictor", "fit_predictor",
    "ConfounderMetrics", "FoldHistory", "MetricsReport", "RunArtifacts",
    "evaluate", "format_summary_table", "run_experiment", "train_fold",
    "train_step_ssl",
]

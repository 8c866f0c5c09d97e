"""Training, checkpoints, prediction, ensembles and metrics."""
from .checkpoint import Checkpoint, CheckpointError
from .loop import ConfigError, FoldData, HistoryRow, NonFiniteLoss, TrainConfig, TrainResult, predict_normalized, train
from .metrics import ConstantTruth, MetricReport, median_iqr, metrics, pearson, r2, rmse
from .predict import (
    CrossValidation,
    EmptyEnsemble,
    FoldOutcome,
    PanelMismatch,
    VocabMismatch,
    checkpoint_features,
    cross_validate,
    ensemble_predict,
    predict,
    predict_normalized_ckpt,
    stable_mean,
)

__all__ = [
    "Checkpoint", "CheckpointError", "ConfigError", "ConstantTruth", "CrossValidation", "EmptyEnsemble",
    "FoldData", "FoldOutcome", "HistoryRow", "MetricReport", "NonFiniteLoss", "PanelMismatch",
    "TrainConfig", "TrainResult", "VocabMismatch", "checkpoint_features", "cross_validate",
    "ensemble_predict", "median_iqr", "metrics", "pearson", "predict", "predict_normalized",
    "predict_normalized_ckpt", "r2", "rmse", "stable_mean", "train",
]

"""Penalty kick direction classifier built on a selective state-space core."""

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    DivergenceError,
    Error,
    InvalidInputError,
    PenaltySample,
    TrainConfig,
    class_weights,
    cosine_warmup_lr,
    cross_validate,
    discretize_zoh,
    evaluate_checkpoint,
    evaluate_predictions,
    generate_synthetic,
    gk_baseline,
    render_report,
    selective_scan,
    stratified_kfold,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "DivergenceError",
    "Error",
    "InvalidInputError",
    "PenaltySample",
    "TrainConfig",
    "class_weights",
    "cosine_warmup_lr",
    "cross_validate",
    "discretize_zoh",
    "evaluate_checkpoint",
    "evaluate_predictions",
    "generate_synthetic",
    "gk_baseline",
    "render_report",
    "selective_scan",
    "stratified_kfold",
]

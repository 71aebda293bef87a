"""Lung nodule segmentation, retrieval and diagnosis."""

from ._lungcadex import (
    ConfigError,
    ContractError,
    DataError,
    InputError,
    LungCadexError,
    ParameterError,
    StateError,
    TrainingError,
    UndefinedMetricError,
    ValidationError,
    bce_loss,
    derive_label,
    dice_loss,
    generate_phantom,
    metrics_report,
    roc_auc,
    run_cli,
    sce_loss,
    segmentation_loss,
    split_by_scan,
    top_k_indices,
    window_value,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "InputError",
    "LungCadexError",
    "ParameterError",
    "StateError",
    "TrainingError",
    "UndefinedMetricError",
    "ValidationError",
    "bce_loss",
    "derive_label",
    "dice_loss",
    "generate_phantom",
    "metrics_report",
    "roc_auc",
    "run_cli",
    "sce_loss",
    "segmentation_loss",
    "split_by_scan",
    "top_k_indices",
    "window_value",
]

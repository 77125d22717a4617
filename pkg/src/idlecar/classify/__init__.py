"""Window and stack construction plus the temporal and spatio-temporal classifiers."""

from .augment import AugmentConfig, augment, augment_batch, batch_augmenter, hflip
from .features import (
    LABELS,
    SpatioTemporalStack,
    TemporalWindow,
    WindowSet,
    sample_stack,
    side_orientation,
    square_crop_box,
    stack_offsets,
    stack_windows,
    temporal_feature,
    temporal_windows,
    window_subsequences,
)
from .models import (
    KINDS,
    SPATIOTEMPORAL,
    TEMPORAL,
    Classifier,
    FoldModel,
    TrainOptions,
    cnn1d_spec,
    cnn2d_spec,
    cnn_lstm_spec,
    default_optimizer,
    default_spec,
    lstm_spec,
    predict_windows,
    select_restart,
    train_classifier,
    train_spatiotemporal,
    train_temporal,
    write_predictions,
)

__all__ = [
    "AugmentConfig",
    "augment",
    "augment_batch",
    "batch_augmenter",
    "hflip",
    "LABELS",
    "SpatioTemporalStack",
    "TemporalWindow",
    "WindowSet",
    "sample_stack",
    "side_orientation",
    "square_crop_box",
    "stack_offsets",
    "stack_windows",
    "temporal_feature",
    "temporal_windows",
    "window_subsequences",
    "KINDS",
    "SPATIOTEMPORAL",
    "TEMPORAL",
    "Classifier",
    "FoldModel",
    "TrainOptions",
    "cnn1d_spec",
    "cnn2d_spec",
    "cnn_lstm_spec",
    "default_optimizer",
    "default_spec",
    "lstm_spec",
    "predict_windows",
    "select_restart",
    "train_classifier",
    "train_spatiotemporal",
    "train_temporal",
    "write_predictions",
]

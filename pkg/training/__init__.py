"""
Two-stage training and the evaluation suite.
"""

from training.classifier import DeceptionClassifier, load_classifier, train_deception_classifier
from training.correlation import CorrelationResult, correlation_matrix, correlation_scores
from training.metrics import clip_scores, deception_rate, per_class_deception, ssim
from training.optim import Adam
from training.report import EvalReport, ImageScores, evaluate
from training.trainer import (
    TrainConfig,
    TrainResult,
    batch_labels,
    restore_network,
    train_stage1,
    train_stage2,
)

__all__ = [
    "Adam",
    "CorrelationResult",
    "DeceptionClassifier",
    "EvalReport",
    "ImageScores",
    "TrainConfig",
    "TrainResult",
    "batch_labels",
    "clip_scores",
    "correlation_matrix",
    "correlation_scores",
    "deception_rate",
    "evaluate",
    "load_classifier",
    "per_class_deception",
    "restore_network",
    "ssim",
    "train_deception_classifier",
    "train_stage1",
    "train_stage2",
]

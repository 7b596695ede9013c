"""
Loss stack: directional, contrastive, feature-space and the weighted total.
"""

from losses.contrastive import (
    DEFAULT_TEMPERATURE,
    ContrastiveBatch,
    ProjectionHead,
    supcon_loss,
    supcon_total,
    unsup_contrastive_loss,
)
from losses.directional import directional_clip_loss
from losses.feature import content_loss, normalized_gram, perceptual_loss, style_gram_loss
from losses.total import (
    ABLATION_PRESETS,
    LOSS_TERMS,
    STAGE1_COLUMNS,
    STAGE2_COLUMNS,
    LossLog,
    LossWeights,
    total_loss,
)

__all__ = [
    "ABLATION_PRESETS",
    "ContrastiveBatch",
    "DEFAULT_TEMPERATURE",
    "LOSS_TERMS",
    "LossLog",
    "LossWeights",
    "ProjectionHead",
    "STAGE1_COLUMNS",
    "STAGE2_COLUMNS",
    "content_loss",
    "directional_clip_loss",
    "normalized_gram",
    "perceptual_loss",
    "style_gram_loss",
    "supcon_loss",
    "supcon_total",
    "total_loss",
    "unsup_contrastive_loss",
]

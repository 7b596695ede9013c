"""
Feature-space losses computed on the frozen encoder's tap activations.
"""

from typing import List, Sequence, Union

from errors import ShapeError
from model.autoencoder import CONTENT_TAPS, STYLE_TAPS, Encoder, EncoderOutput
from tensor import Tensor, as_tensor, gram, l2_norm


Taps = Union[EncoderOutput, Sequence[Tensor]]


def _taps(features: Taps, indices=None) -> List[Tensor]:
    if isinstance(features, EncoderOutput):
        return features.select(indices) if indices is not None else list(features.taps)
    taps = [as_tensor(f) for f in features]
    return [t if t.ndim == 4 else t.unsqueeze(0) for t in taps]


def _check(out: List[Tensor], ref: List[Tensor], what: str):
    if len(out) != len(ref):
        raise ShapeError(f"{what}: {len(out)} output taps vs {len(ref)} reference taps")
    for i, (a, b) in enumerate(zip(out, ref)):
        if a.shape[1:] != b.shape[1:] or b.shape[0] not in (1, a.shape[0]):
            raise ShapeError(f"{what}: tap {i} shapes differ, {a.shape} vs {b.shape}")


def normalized_gram(features: Tensor) -> Tensor:
    """Gram matrix of [B, C, H, W] features divided by C·H·W."""
    b, c, h, w = features.shape
    return gram(features.reshape(b, c, h * w)) * (1.0 / (c * h * w))


def style_gram_loss(out: Taps, style: Taps) -> Tensor:
    """Σ over taps of the L1 distance between normalized Gram matrices, averaged over the batch."""
    out_taps, style_taps = _taps(out, STYLE_TAPS), _taps(style, STYLE_TAPS)
    _check(out_taps, style_taps, "style_gram_loss")
    total = None
    for a, b in zip(out_taps, style_taps):
        term = (normalized_gram(a) - normalized_gram(b)).abs().sum(axis=(1, 2)).mean()
        total = term if total is None else total + term
    return total


def content_loss(out: Taps, content: Taps) -> Tensor:
    """Σ over taps of the mean absolute feature difference."""
    out_taps, content_taps = _taps(out, CONTENT_TAPS), _taps(content, CONTENT_TAPS)
    _check(out_taps, content_taps, "content_loss")
    total = None
    for a, b in zip(out_taps, content_taps):
        term = (a - b).abs().mean()
        total = term if total is None else total + term
    return total


def _unit_channels(features: Tensor, eps: float = 1e-10) -> Tensor:
    return features / (l2_norm(features, axis=1, keepdims=True) + eps)


def perceptual_loss(image_a, image_b, encoder: Encoder) -> Tensor:
    """
    Learned-metric stand-in: squared distance between channel-normalized
    features of a frozen encoder, averaged over positions and summed over taps.
    """
    taps_a, taps_b = encoder(image_a).taps, encoder(image_b).taps
    total = None
    for a, b in zip(taps_a, taps_b):
        diff = _unit_channels(a) - _unit_channels(b)
        term = (diff * diff).sum(axis=1).mean()
        total = term if total is None else total + term
    return total


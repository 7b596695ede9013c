"""
Supervised and unsupervised contrastive losses over projected embeddings.
"""

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from errors import ConfigurationError, DegenerateInputWarning, ShapeError
from model.layers import Linear, Module
from tensor import RngStream, Tensor, as_tensor, concat, l2_normalize, stack


DEFAULT_TEMPERATURE = 0.1


class ProjectionHead(Module):
    """Linear D → P map followed by L2 normalization; trained with the network."""

    def __init__(self, embed_dim: int = 64, proj_dim: int = 128, rng: Optional[RngStream] = None):
        self.proj = Linear(embed_dim, proj_dim, rng or RngStream(0))

    def forward(self, z) -> Tensor:
        return l2_normalize(self.proj(as_tensor(getattr(z, "vec", z))), axis=-1)


def _rows(values) -> Tensor:
    if isinstance(values, Tensor):
        return values
    if isinstance(values, np.ndarray):
        return Tensor(values)
    return stack([as_tensor(getattr(v, "vec", v)) for v in values])


@dataclass
class ContrastiveBatch:
    """
    Attributes:
        embeddings: Unit-norm rows [N, P]
        labels: Class id per row
        temperature: Softmax temperature τ > 0
    """
    embeddings: Tensor
    labels: np.ndarray
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        self.embeddings = _rows(self.embeddings)
        self.labels = np.asarray(self.labels)
        if self.embeddings.ndim != 2:
            raise ShapeError(f"contrastive embeddings must be [N, P], got {self.embeddings.shape}")
        if len(self.labels) != self.embeddings.shape[0]:
            raise ShapeError(f"{self.embeddings.shape[0]} embeddings but {len(self.labels)} labels")
        if len(self.labels) < 2:
            raise ShapeError("a contrastive batch needs at least 2 samples")
        if self.temperature <= 0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}")

    @classmethod
    def pair(cls, first: Tensor, second: Tensor, labels, temperature: float = DEFAULT_TEMPERATURE) -> "ContrastiveBatch":
        """Two aligned collections sharing labels, stacked into one batch of 2n."""
        labels = np.asarray(labels)
        return cls(concat([first, second], axis=0), np.concatenate([labels, labels]), temperature)


def supcon_loss(batch: ContrastiveBatch, reduction: str = "sum") -> Tensor:
    """
    Supervised contrastive loss

        L = −Σ_i 1/|P(i)| Σ_{p∈P(i)} log( exp(z_i·z_p/τ) / Σ_{k≠i} exp(z_i·z_k/τ) )

    with P(i) the other samples sharing i's label. Anchors without positives
    contribute 0 and trigger a warning.

    Args:
        batch: Embeddings, labels, temperature
        reduction: "sum" over anchors or "mean" over anchors with positives
    """
    z, labels = batch.embeddings, batch.labels
    n = len(labels)
    logits = (z @ z.T) * (1.0 / batch.temperature)
    shifted = logits - logits.data.max(axis=1, keepdims=True)
    not_self = 1.0 - np.eye(n)
    positives = (labels[:, None] == labels[None, :]) * not_self
    counts = positives.sum(axis=1)

    lonely = counts == 0
    if np.any(lonely):
        warnings.warn(
            f"{int(lonely.sum())} sample(s) have no same-label partner and contribute 0",
            DegenerateInputWarning,
            stacklevel=2,
        )

    log_prob = shifted - ((shifted.exp() * not_self).sum(axis=1, keepdims=True)).log()
    per_anchor = -(log_prob * positives).sum(axis=1) * (1.0 / np.maximum(counts, 1))
    if reduction == "sum":
        return per_anchor.sum()
    if reduction == "mean":
        return per_anchor.sum() * (1.0 / max(int((~lonely).sum()), 1))
    raise ConfigurationError(f"unknown reduction '{reduction}'")


def supcon_total(
    stylized_image,
    stylized_text,
    style_images,
    labels,
    head: ProjectionHead,
    temperature: float = DEFAULT_TEMPERATURE,
    reduction: str = "sum",
) -> Tensor:
    """
    Sum of the three pairwise SupCon terms tying image-guided outputs,
    text-guided outputs and the style paintings together.

    Args:
        stylized_image: Embeddings of image-guided outputs [n, D]
        stylized_text: Embeddings of text-guided outputs [n, D]
        style_images: Embeddings of the style paintings [n, D]
        labels: Class id per row
        head: Shared projection head

    Raises:
        ShapeError: If the collections or labels differ in length
    """
    img, txt, sty = _rows(stylized_image), _rows(stylized_text), _rows(style_images)
    sizes = {img.shape[0], txt.shape[0], sty.shape[0], len(labels)}
    if len(sizes) != 1:
        raise ShapeError(
            f"supcon collections must align: {img.shape[0]}, {txt.shape[0]}, {sty.shape[0]} rows, {len(labels)} labels"
        )
    p_img, p_txt, p_sty = head(img), head(txt), head(sty)
    terms = [
        ContrastiveBatch.pair(p_img, p_txt, labels, temperature),
        ContrastiveBatch.pair(p_sty, p_txt, labels, temperature),
        ContrastiveBatch.pair(p_sty, p_img, labels, temperature),
    ]
    total = supcon_loss(terms[0], reduction)
    for batch in terms[1:]:
        total = total + supcon_loss(batch, reduction)
    return total


Pairs = Union[Sequence[Tuple[Tensor, Tensor]], Tuple[Tensor, Tensor]]


def unsup_contrastive_loss(pairs: Pairs, temperature: float = DEFAULT_TEMPERATURE, reduction: str = "sum") -> Tensor:
    """
    NT-Xent: each sample's only positive is the other member of its pair.

    Args:
        pairs: A sequence of (z_a, z_b) vectors, or two aligned [m, P] views
    """
    if isinstance(pairs, tuple) and len(pairs) == 2 and all(isinstance(p, Tensor) and p.ndim == 2 for p in pairs):
        first, second = pairs
    else:
        pairs = list(pairs)
        first = _rows([a for a, _ in pairs]) if pairs else None
        second = _rows([b for _, b in pairs]) if pairs else None
    count = 0 if first is None else first.shape[0]
    if count < 2:
        warnings.warn("unsupervised contrastive loss needs at least 2 pairs; returning 0", DegenerateInputWarning, stacklevel=2)
        return Tensor(0.0)
    return supcon_loss(ContrastiveBatch.pair(first, second, np.arange(count), temperature), reduction)

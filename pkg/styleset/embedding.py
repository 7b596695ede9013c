"""
Joint text/image embedding space.

Images are embedded by standardizing their style descriptor with dataset-wide
statistics and applying a frozen seeded random projection, followed by L2
normalization. Text (a style class label) is embedded by looking up its
anchor: the normalized mean embedding of that class's paintings, or of the
unstyled content images for the null "photo" class.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from errors import CalibrationError, ShapeError, StyleLookupError, UsageError
from styleset.descriptor import DEFAULT_BANDWIDTH, DESCRIPTOR_SIZE, describe
from styleset.synthetic import NULL_CLASS, NULL_CLASS_ID, ImageSample, StyleClass, class_name
from tensor import RngStream, Tensor, as_tensor, l2_normalize, no_grad


ImageLike = Union[ImageSample, Tensor, np.ndarray]
ClassKey = Union[StyleClass, int, str]


class EmbeddingSource(str, Enum):
    TEXT = "text"
    IMAGE = "image"


@dataclass
class Embedding:
    """A unit-norm vector in the joint space."""
    vec: Tensor
    source: EmbeddingSource
    label: Optional[str] = None

    @property
    def dim(self) -> int:
        return self.vec.shape[-1]

    def cosine(self, other: "Embedding") -> float:
        return float(np.dot(self.vec.data, other.vec.data))


@dataclass
class ProjectionMatrix:
    """
    Frozen descriptor-to-embedding map.

    Attributes:
        weight: Gaussian projection [S, D], never trained
        center: Per-dimension descriptor mean over the dataset
        scale: Per-dimension descriptor spread over the dataset
        bandwidth: Hue kernel bandwidth used by the descriptor
    """
    weight: np.ndarray
    center: np.ndarray = None
    scale: np.ndarray = None
    bandwidth: float = DEFAULT_BANDWIDTH

    def __post_init__(self):
        size = self.weight.shape[0]
        if self.center is None:
            self.center = np.zeros(size)
        if self.scale is None:
            self.scale = np.ones(size)

    @classmethod
    def create(cls, embed_dim: int, rng: RngStream, bandwidth: float = DEFAULT_BANDWIDTH) -> "ProjectionMatrix":
        weight = rng.normal((DESCRIPTOR_SIZE, embed_dim), scale=1.0 / np.sqrt(embed_dim))
        return cls(weight=weight, bandwidth=bandwidth)

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    def fit(self, descriptors: np.ndarray) -> "ProjectionMatrix":
        """Set the standardization statistics from descriptors [N, S]."""
        self.center = descriptors.mean(axis=0)
        spread = descriptors.std(axis=0)
        self.scale = np.where(spread > 1e-12, spread, 1.0)
        return self

    def project(self, descriptors: Tensor) -> Tensor:
        return l2_normalize(((descriptors - self.center) / self.scale) @ self.weight, axis=-1)

    def to_dict(self) -> dict:
        return {
            "weight": self.weight.tolist(),
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
            "bandwidth": self.bandwidth,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProjectionMatrix":
        return cls(
            weight=np.asarray(data["weight"], dtype=np.float64),
            center=np.asarray(data["center"], dtype=np.float64),
            scale=np.asarray(data["scale"], dtype=np.float64),
            bandwidth=float(data["bandwidth"]),
        )


def _pixels(img: ImageLike):
    return img.pixels if isinstance(img, ImageSample) else img


def encode_images(pixels, codebook: ProjectionMatrix) -> Tensor:
    """Batched image encoder: [B, 3, H, W] → [B, D], differentiable w.r.t. pixels."""
    x = as_tensor(pixels)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"encode_images expects [B,3,H,W] pixels, got {x.shape}")
    return codebook.project(describe(x, codebook.bandwidth))


def encode_image(img: ImageLike, codebook: ProjectionMatrix) -> Embedding:
    x = as_tensor(_pixels(img))
    if x.ndim != 3:
        raise ShapeError(f"encode_image expects a single [3,H,W] image, got {x.shape}")
    label = class_name(img.class_id) if isinstance(img, ImageSample) and img.class_id is not None else None
    return Embedding(vec=encode_images(x.unsqueeze(0), codebook)[0], source=EmbeddingSource.IMAGE, label=label)


def embed_array(images: Sequence[ImageLike], codebook: ProjectionMatrix, batch_size: int = 64) -> np.ndarray:
    """Embeddings of many images as a plain [N, D] array, computed without a graph."""
    rows = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            chunk = np.stack([np.asarray(_pixels(img)) for img in images[start:start + batch_size]])
            rows.append(encode_images(chunk, codebook).data)
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, codebook.dim))


@dataclass
class AnchorTable:
    """Unit-norm text anchors keyed by class id (NULL_CLASS_ID for "photo")."""
    vectors: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def class_ids(self) -> List[int]:
        return sorted(c for c in self.vectors if c != NULL_CLASS_ID)

    def resolve(self, key: ClassKey) -> int:
        if isinstance(key, StyleClass):
            class_id = key.id
        elif isinstance(key, str):
            if key == NULL_CLASS.name:
                class_id = NULL_CLASS_ID
            elif key.startswith("style-") and key[len("style-"):].lstrip("-").isdigit():
                class_id = int(key[len("style-"):])
            elif key.lstrip("-").isdigit():
                class_id = int(key)
            else:
                raise StyleLookupError(f"unknown style class '{key}'")
        else:
            class_id = int(key)
        if class_id not in self.vectors:
            raise StyleLookupError(f"unknown style class '{key}' (known: {[class_name(c) for c in sorted(self.vectors)]})")
        return class_id

    def vector(self, key: ClassKey) -> np.ndarray:
        return self.vectors[self.resolve(key)]

    def matrix(self, class_ids: Optional[Sequence[int]] = None) -> np.ndarray:
        ids = self.class_ids if class_ids is None else class_ids
        return np.stack([self.vectors[c] for c in ids])

    def to_dict(self) -> Dict[str, list]:
        return {str(c): self.vectors[c].tolist() for c in sorted(self.vectors)}

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "AnchorTable":
        return cls({int(c): np.asarray(v, dtype=np.float64) for c, v in data.items()})


def _normalized_mean(rows: np.ndarray) -> np.ndarray:
    mean = rows.mean(axis=0)
    return mean / max(np.linalg.norm(mean), 1e-12)


def compute_anchors(
    painting_embeddings: Dict[int, np.ndarray],
    content_embeddings: np.ndarray,
) -> AnchorTable:
    """
    Args:
        painting_embeddings: Class id → [K_c, D] painting embeddings
        content_embeddings: [M, D] embeddings of unstyled content images

    Raises:
        CalibrationError: If a class has no paintings
    """
    table = AnchorTable()
    for class_id in sorted(painting_embeddings):
        rows = painting_embeddings[class_id]
        if len(rows) == 0:
            raise CalibrationError(f"class {class_name(class_id)} has no paintings to calibrate its anchor")
        table.vectors[class_id] = _normalized_mean(rows)
    if len(content_embeddings) == 0:
        raise CalibrationError("no content images to calibrate the photo anchor")
    table.vectors[NULL_CLASS_ID] = _normalized_mean(content_embeddings)
    return table


def calibrate_anchors(dataset) -> AnchorTable:
    """Anchor table of a built dataset (a StyleDataset)."""
    by_class = {}
    for style in dataset.classes:
        paintings = dataset.paintings_of(style.id)
        by_class[style.id] = embed_array(paintings, dataset.codebook) if paintings else np.zeros((0, dataset.codebook.dim))
    return compute_anchors(by_class, embed_array(dataset.contents, dataset.codebook))


def encode_text(c: ClassKey, anchors: AnchorTable) -> Embedding:
    class_id = anchors.resolve(c)
    return Embedding(vec=Tensor(anchors.vectors[class_id].copy()), source=EmbeddingSource.TEXT, label=class_name(class_id))


@dataclass
class StyleRef:
    """A style indicator: a class label (text path) or a style image (image path)."""
    class_id: Optional[ClassKey] = None
    image: Optional[ImageSample] = None

    def __post_init__(self):
        if (self.class_id is None) == (self.image is None):
            raise UsageError("a style reference needs exactly one of a class label or a style image")

    @classmethod
    def text(cls, c: ClassKey) -> "StyleRef":
        return cls(class_id=c)

    @classmethod
    def from_image(cls, img: ImageSample) -> "StyleRef":
        return cls(image=img)

    @property
    def is_text(self) -> bool:
        return self.image is None


class JointEmbedder:
    """Both encoders of the joint space bound to one dataset's codebook and anchors."""

    def __init__(self, codebook: ProjectionMatrix, anchors: AnchorTable):
        self.codebook = codebook
        self.anchors = anchors

    @property
    def dim(self) -> int:
        return self.codebook.dim

    def image(self, img: ImageLike) -> Embedding:
        return encode_image(img, self.codebook)

    def images(self, pixels) -> Tensor:
        return encode_images(pixels, self.codebook)

    def text(self, c: ClassKey) -> Embedding:
        return encode_text(c, self.anchors)

    def embed(self, style: StyleRef) -> Embedding:
        return self.text(style.class_id) if style.is_text else self.image(style.image)

    def target_class(self, style: StyleRef) -> Optional[int]:
        if style.is_text:
            return self.anchors.resolve(style.class_id)
        return style.image.class_id


def export_embeddings_csv(labels: Sequence[str], vectors: np.ndarray, path: Union[str, Path]) -> Path:
    """One row per embedding, first column the label."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(np.asarray(vectors), columns=[f"e{i}" for i in range(np.shape(vectors)[1])])
    frame.insert(0, "label", list(labels))
    frame.to_csv(path, index=False, float_format="%.17g")
    return path

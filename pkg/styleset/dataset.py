"""
Building, persisting and loading the synthetic style dataset.

A dataset directory holds content_<id>.png, painting_<class>_<index>.png and
manifest.json. The manifest records every seed and class parameter, the frozen
projection codebook, the anchor table and calibration statistics, so a
directory is self-describing.
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from errors import ConfigurationError
from styleset.calibration import calibration_report
from styleset.descriptor import DEFAULT_BANDWIDTH, describe
from styleset.embedding import AnchorTable, JointEmbedder, ProjectionMatrix, calibrate_anchors
from styleset.synthetic import (
    ImageRole,
    ImageSample,
    StyleClass,
    apply_style,
    load_png,
    quantize,
    render_content,
    sample_style_classes,
    save_png,
)
from tensor import RngStream, no_grad


MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "clast-dataset/1"

# substream keys under the master seed
_CONTENT_KEY, _CLASS_KEY, _ASSIGN_KEY, _CODEBOOK_KEY, _HOLDOUT_KEY = range(5)


@dataclass
class DatasetConfig:
    """Configuration for a synthetic dataset build."""
    num_classes: int = 2                # C, style classes
    paintings_per_class: int = 8        # K, each from a distinct content image
    num_contents: int = 16              # M
    image_size: int = 32                # H = W
    seed: int = 0
    embed_dim: int = 64                 # D
    hue_bandwidth: float = DEFAULT_BANDWIDTH
    holdout_fraction: float = 0.25      # content images held out of reconstruction training
    workers: int = 1                    # parallel image rendering

    def validate(self):
        if self.num_classes < 2 or self.paintings_per_class < 2 or self.num_contents < 2:
            raise ConfigurationError(
                f"need at least 2 classes, 2 paintings per class and 2 content images, got "
                f"C={self.num_classes}, K={self.paintings_per_class}, M={self.num_contents}"
            )
        if self.paintings_per_class > self.num_contents:
            raise ConfigurationError(
                f"paintings_per_class ({self.paintings_per_class}) exceeds num_contents ({self.num_contents}): "
                "each painting of a class needs its own content image"
            )
        if self.image_size % 4:
            raise ConfigurationError(f"image_size must be a multiple of 4, got {self.image_size}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigurationError(f"holdout_fraction must lie in [0, 1), got {self.holdout_fraction}")


@dataclass
class DatasetManifest:
    """Everything needed to reproduce and interpret a dataset directory."""
    config: DatasetConfig
    classes: List[StyleClass]
    contents: List[Dict] = field(default_factory=list)       # {"content_id", "file"}
    paintings: List[Dict] = field(default_factory=list)      # {"class_id", "index", "content_id", "file"}
    holdout: List[int] = field(default_factory=list)         # held-out content ids
    codebook: Optional[ProjectionMatrix] = None
    anchors: Optional[AnchorTable] = None
    calibration: Dict[str, float] = field(default_factory=dict)
    classifier: Optional[Dict] = None
    root: Optional[Path] = None

    def to_dict(self, include_classifier: bool = True) -> Dict:
        config = asdict(self.config)
        config.pop("workers")
        data = {
            "format": MANIFEST_FORMAT,
            "config": config,
            "seeds": {"master": self.config.seed, "rng": RngStream.ALGORITHM},
            "classes": [c.to_dict() for c in self.classes],
            "contents": self.contents,
            "paintings": self.paintings,
            "holdout": self.holdout,
            "descriptor": {"size": 18, "hue_bins": 8, "hue_bandwidth": self.config.hue_bandwidth},
            "codebook": self.codebook.to_dict() if self.codebook else None,
            "anchors": self.anchors.to_dict() if self.anchors else None,
            "calibration": self.calibration,
        }
        if include_classifier:
            data["classifier"] = self.classifier
        return data

    @property
    def hash(self) -> str:
        """SHA-256 of the canonical manifest, independent of location and of the stored classifier."""
        canonical = json.dumps(self.to_dict(include_classifier=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def save(self, root: Union[str, Path, None] = None) -> Path:
        root = Path(root or self.root)
        root.mkdir(parents=True, exist_ok=True)
        self.root = root
        path = root / MANIFEST_NAME
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        return path

    @classmethod
    def load(cls, root: Union[str, Path]) -> "DatasetManifest":
        root = Path(root)
        path = root / MANIFEST_NAME if root.is_dir() else root
        if not path.exists():
            raise ConfigurationError(f"no dataset manifest at {path}; run build-dataset first")
        with open(path) as f:
            data = json.load(f)
        if data.get("format") != MANIFEST_FORMAT:
            raise ConfigurationError(f"{path} is not a dataset manifest (format {data.get('format')!r})")
        return cls(
            config=DatasetConfig(**data["config"]),
            classes=[StyleClass.from_dict(c) for c in data["classes"]],
            contents=data["contents"],
            paintings=data["paintings"],
            holdout=data["holdout"],
            codebook=ProjectionMatrix.from_dict(data["codebook"]) if data.get("codebook") else None,
            anchors=AnchorTable.from_dict(data["anchors"]) if data.get("anchors") else None,
            calibration=data.get("calibration", {}),
            classifier=data.get("classifier"),
            root=path.parent,
        )


class StyleDataset:
    """A dataset with its images in memory."""

    def __init__(self, manifest: DatasetManifest, contents: List[ImageSample], paintings: List[ImageSample]):
        self.manifest = manifest
        self.contents = contents
        self.paintings = paintings
        self._by_class: Dict[int, List[ImageSample]] = {}
        for painting in paintings:
            self._by_class.setdefault(painting.class_id, []).append(painting)

    @property
    def classes(self) -> List[StyleClass]:
        return self.manifest.classes

    @property
    def num_classes(self) -> int:
        return len(self.manifest.classes)

    @property
    def codebook(self) -> ProjectionMatrix:
        return self.manifest.codebook

    @property
    def anchors(self) -> AnchorTable:
        return self.manifest.anchors

    @property
    def embedder(self) -> JointEmbedder:
        return JointEmbedder(self.codebook, self.anchors)

    @property
    def image_size(self) -> int:
        return self.manifest.config.image_size

    def style_class(self, class_id: int) -> StyleClass:
        for style in self.classes:
            if style.id == class_id:
                return style
        raise ConfigurationError(f"dataset has no class {class_id}")

    def paintings_of(self, class_id: int) -> List[ImageSample]:
        return self._by_class.get(class_id, [])

    def content(self, content_id: int) -> ImageSample:
        return self.contents[content_id]

    @property
    def holdout_contents(self) -> List[ImageSample]:
        held = set(self.manifest.holdout)
        return [c for c in self.contents if c.content_id in held]

    @property
    def train_contents(self) -> List[ImageSample]:
        held = set(self.manifest.holdout)
        return [c for c in self.contents if c.content_id not in held]


def _map(fn, items, workers: int) -> list:
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def build_dataset(
    C: int,
    K: int,
    M: int,
    size: int,
    seed: int,
    root: Union[str, Path],
    embed_dim: int = 64,
    bandwidth: float = DEFAULT_BANDWIDTH,
    holdout_fraction: float = 0.25,
    workers: int = 1,
) -> DatasetManifest:
    """
    Render a dataset and write it to `root`.

    Every image draws from its own substream of the master seed, so the
    result does not depend on `workers`.

    Args:
        C: Number of style classes
        K: Paintings per class, each from a distinct content image
        M: Number of content images
        size: Image side in pixels
        seed: Master seed
        root: Output directory

    Returns:
        The written manifest

    Raises:
        ConfigurationError: If K > M or any count is below 2
    """
    config = DatasetConfig(
        num_classes=C, paintings_per_class=K, num_contents=M, image_size=size, seed=seed,
        embed_dim=embed_dim, hue_bandwidth=bandwidth, holdout_fraction=holdout_fraction, workers=workers,
    )
    return build_from_config(config, root)


def build_from_config(config: DatasetConfig, root: Union[str, Path]) -> DatasetManifest:
    config.validate()
    root = Path(root)
    rng = RngStream(config.seed)

    contents = _map(
        lambda m: render_content(m, config.image_size, rng.split(_CONTENT_KEY, m)),
        range(config.num_contents),
        config.workers,
    )
    classes = sample_style_classes(config.num_classes, rng.split(_CLASS_KEY))

    jobs = []
    for style in classes:
        chosen = rng.split(_ASSIGN_KEY, style.id).permutation(config.num_contents)[:config.paintings_per_class]
        jobs.extend((style, index, int(content_id)) for index, content_id in enumerate(chosen))

    def paint(job) -> ImageSample:
        style, index, content_id = job
        painting = apply_style(contents[content_id], style)
        painting.pixels = quantize(painting.pixels)
        painting.index = index
        return painting

    paintings = _map(paint, jobs, config.workers)
    _map(lambda img: save_png(img.pixels, root / img.filename), contents + paintings, config.workers)

    num_holdout = int(round(config.holdout_fraction * config.num_contents))
    holdout = sorted(int(m) for m in rng.split(_HOLDOUT_KEY).permutation(config.num_contents)[:num_holdout])

    manifest = DatasetManifest(
        config=config,
        classes=classes,
        contents=[{"content_id": c.content_id, "file": c.filename} for c in contents],
        paintings=[
            {"class_id": p.class_id, "index": p.index, "content_id": p.content_id, "file": p.filename}
            for p in paintings
        ],
        holdout=holdout,
        codebook=ProjectionMatrix.create(config.embed_dim, rng.split(_CODEBOOK_KEY), config.hue_bandwidth),
        root=root,
    )
    with no_grad():
        everything = np.stack([img.pixels for img in contents + paintings])
        manifest.codebook.fit(describe(everything, config.hue_bandwidth).data)

    dataset = StyleDataset(manifest, contents, paintings)
    manifest.anchors = calibrate_anchors(dataset)
    manifest.calibration = calibration_report(dataset)
    manifest.save(root)
    return manifest


def load_dataset(source: Union[str, Path, DatasetManifest]) -> StyleDataset:
    """Load a dataset directory (or an already-loaded manifest) with its images."""
    manifest = source if isinstance(source, DatasetManifest) else DatasetManifest.load(source)
    root = Path(manifest.root)
    contents = [
        ImageSample(pixels=load_png(root / entry["file"]), role=ImageRole.CONTENT, content_id=entry["content_id"])
        for entry in manifest.contents
    ]
    paintings = [
        ImageSample(
            pixels=load_png(root / entry["file"]),
            role=ImageRole.PAINTING,
            class_id=entry["class_id"],
            content_id=entry["content_id"],
            index=entry["index"],
        )
        for entry in manifest.paintings
    ]
    return StyleDataset(manifest, contents, paintings)

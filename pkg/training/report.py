"""
Evaluation of a trained network on held-out content images.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from errors import EvaluationError
from model import StyleNet, stylize
from styleset import StyleDataset, StyleRef, save_png
from tensor import no_grad
from training.classifier import DeceptionClassifier
from training.correlation import CorrelationResult, correlation_matrix
from training.metrics import clip_scores, deception_rate, per_class_deception, ssim


@dataclass
class ImageScores:
    content_id: int
    class_id: int
    s_cont: float
    s_style: float
    ssim: float


@dataclass
class EvalReport:
    """Per-image scores, their means, deception rates and the correlation analysis."""
    images: List[ImageScores]
    deception_rate: float
    correlation: CorrelationResult
    config_hash: str = ""
    per_class_deception: Dict[int, float] = field(default_factory=dict)
    reconstruction_ssim: Optional[float] = None
    fusion_variant: str = ""

    @property
    def means(self) -> Dict[str, float]:
        return {
            "s_cont": float(np.mean([s.s_cont for s in self.images])),
            "s_style": float(np.mean([s.s_style for s in self.images])),
            "ssim": float(np.mean([s.ssim for s in self.images])),
        }

    def validate(self) -> "EvalReport":
        """
        Raises:
            EvaluationError: On non-finite scores, a deception rate outside
                [0, 1], or correlation rows not summing to 1
        """
        if not self.images:
            raise EvaluationError("report has no scored images")
        values = [v for s in self.images for v in (s.s_cont, s.s_style, s.ssim)]
        if not np.all(np.isfinite(values)):
            raise EvaluationError("report contains non-finite image scores")
        if not 0.0 <= self.deception_rate <= 1.0:
            raise EvaluationError(f"deception rate {self.deception_rate} outside [0, 1]")
        if not np.all(np.isfinite(self.correlation.scores)):
            raise EvaluationError("correlation matrix contains non-finite entries")
        row_error = np.max(np.abs(self.correlation.scores.sum(axis=1) - 1.0))
        if row_error > 1e-9:
            raise EvaluationError(f"correlation rows do not sum to 1 (max error {row_error:.3g})")
        return self

    def to_dict(self) -> Dict:
        return {
            "config_hash": self.config_hash,
            "fusion_variant": self.fusion_variant,
            "means": self.means,
            "deception_rate": self.deception_rate,
            "per_class_deception": {str(k): v for k, v in sorted(self.per_class_deception.items())},
            "reconstruction_ssim": self.reconstruction_ssim,
            "correlation": self.correlation.summary(),
            "images": [vars(s) for s in self.images],
        }

    def save(self, run_dir: Union[str, Path]) -> Path:
        """Write eval.json and correlation.csv into `run_dir`."""
        self.validate()
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        self.correlation.to_csv(run_dir / "correlation.csv")
        path = run_dir / "eval.json"
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        return path


def evaluate(
    net: StyleNet,
    dataset: StyleDataset,
    classifier: DeceptionClassifier,
    config_hash: str = "",
    image_dir: Optional[Union[str, Path]] = None,
) -> EvalReport:
    """
    Stylize every held-out content image into every class (text path) and score it.

    Args:
        net: Trained network
        dataset: Dataset the network was trained on
        classifier: Style classifier for the deception rate
        config_hash: Hash of the resolved configuration
        image_dir: If given, stylized images are written there as PNG
    """
    embedder = dataset.embedder
    contents = dataset.holdout_contents or dataset.contents
    class_ids = [style.id for style in dataset.classes]

    scores, stylized = [], []
    recon = []
    for content in contents:
        with no_grad():
            rebuilt = np.clip(net(content.pixels).data[0], 0.0, 1.0)
        recon.append(ssim(content, rebuilt))
        for class_id in class_ids:
            style = StyleRef.text(class_id)
            out = stylize(content, style, net, embedder)
            s_cont, s_style = clip_scores(content, out, style, embedder)
            scores.append(ImageScores(content.content_id, class_id, s_cont, s_style, ssim(content, out)))
            stylized.append((out, class_id))
            if image_dir is not None:
                save_png(out.pixels, Path(image_dir) / out.filename)

    report = EvalReport(
        images=scores,
        deception_rate=deception_rate(stylized, classifier),
        correlation=correlation_matrix(dataset.paintings, class_ids, embedder),
        config_hash=config_hash,
        per_class_deception=per_class_deception(stylized, classifier, class_ids),
        reconstruction_ssim=float(np.mean(recon)),
        fusion_variant=net.tag.value,
    )
    return report.validate()

"""
Painting-to-class correlation analysis.

Each painting's image embedding is compared with every class anchor by
cosine similarity and the row is turned into a distribution with a softmax
(temperature 1). A strong diagonal means text anchors and paintings of the
same class are aligned in the joint space.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from styleset.embedding import JointEmbedder, embed_array
from styleset.synthetic import ImageSample, class_name
from tensor import Tensor, softmax


@dataclass
class CorrelationResult:
    scores: np.ndarray          # [N, C], rows sum to 1
    labels: np.ndarray          # true class per painting
    class_ids: List[int]

    @property
    def predicted(self) -> np.ndarray:
        return np.asarray(self.class_ids)[np.argmax(self.scores, axis=1)]

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.predicted == self.labels))

    def summary(self) -> Dict:
        """Row-argmax accuracy and, per true class, how often each class wins."""
        wins = {
            class_name(c): {class_name(p): int(np.sum((self.labels == c) & (self.predicted == p))) for p in self.class_ids}
            for c in self.class_ids
        }
        return {
            "argmax_accuracy": self.accuracy,
            "paintings": int(len(self.labels)),
            "mean_diagonal_score": float(np.mean(self.scores[np.arange(len(self.labels)), self._columns()])),
            "argmax_counts": wins,
        }

    def _columns(self) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.class_ids)}
        return np.array([index.get(int(c), 0) for c in self.labels])

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(self.scores, columns=[class_name(c) for c in self.class_ids])
        frame.insert(0, "true_class", [class_name(int(c)) for c in self.labels])
        frame.insert(0, "painting", np.arange(len(self.labels)))
        frame["argmax"] = [class_name(int(c)) for c in self.predicted]
        frame.to_csv(path, index=False, float_format="%.17g")
        return path


def correlation_scores(image_embeddings: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """softmax_j(cos(e_i, a_j)) for unit-norm rows."""
    return softmax(Tensor(image_embeddings @ anchors.T), axis=1).data


def correlation_matrix(
    paintings: Sequence[ImageSample],
    classes: Sequence[int],
    embedder: JointEmbedder,
) -> CorrelationResult:
    class_ids = [getattr(c, "id", c) for c in classes]
    embeddings = embed_array(list(paintings), embedder.codebook)
    scores = correlation_scores(embeddings, embedder.anchors.matrix(class_ids))
    labels = np.array([p.class_id if p.class_id is not None else -1 for p in paintings])
    return CorrelationResult(scores=scores, labels=labels, class_ids=list(class_ids))

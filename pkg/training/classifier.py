"""
Style classifier used to measure the deception rate.

Multinomial logistic regression on standardized style descriptors of the
real paintings, trained by full-batch gradient descent.
"""

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from errors import DegenerateInputWarning
from styleset.descriptor import describe
from tensor import Tensor, log_softmax, no_grad


MIN_ACCURACY = 0.9


@dataclass
class DeceptionClassifier:
    weight: np.ndarray                  # [S, C]
    bias: np.ndarray                    # [C]
    center: np.ndarray                  # [S]
    scale: np.ndarray                   # [S]
    class_ids: List[int]
    bandwidth: float = 0.25
    accuracy: float = 0.0
    history: List[float] = field(default_factory=list)

    def logits(self, descriptors: np.ndarray) -> np.ndarray:
        return ((descriptors - self.center) / self.scale) @ self.weight + self.bias

    def predict_descriptors(self, descriptors: np.ndarray) -> np.ndarray:
        return np.asarray(self.class_ids)[np.argmax(self.logits(descriptors), axis=1)]

    def predict(self, images: Sequence[np.ndarray]) -> np.ndarray:
        with no_grad():
            descriptors = describe(np.stack([np.asarray(img) for img in images]), self.bandwidth).data
        return self.predict_descriptors(descriptors)

    def to_dict(self) -> Dict:
        return {
            "weight": self.weight.tolist(),
            "bias": self.bias.tolist(),
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
            "class_ids": list(self.class_ids),
            "bandwidth": self.bandwidth,
            "accuracy": self.accuracy,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "DeceptionClassifier":
        return cls(
            weight=np.asarray(data["weight"], dtype=np.float64),
            bias=np.asarray(data["bias"], dtype=np.float64),
            center=np.asarray(data["center"], dtype=np.float64),
            scale=np.asarray(data["scale"], dtype=np.float64),
            class_ids=[int(c) for c in data["class_ids"]],
            bandwidth=float(data["bandwidth"]),
            accuracy=float(data["accuracy"]),
        )


def fit_softmax_regression(
    features: np.ndarray,
    labels: np.ndarray,
    class_ids: List[int],
    steps: int = 2000,
    lr: float = 0.5,
    bandwidth: float = 0.25,
) -> DeceptionClassifier:
    """Cross-entropy gradient descent from zero weights; fully deterministic."""
    center = features.mean(axis=0)
    spread = features.std(axis=0)
    scale = np.where(spread > 1e-12, spread, 1.0)
    x = (features - center) / scale
    index = {c: i for i, c in enumerate(class_ids)}
    onehot = np.zeros((len(labels), len(class_ids)))
    onehot[np.arange(len(labels)), [index[int(c)] for c in labels]] = 1.0

    weight = Tensor(np.zeros((x.shape[1], len(class_ids))), requires_grad=True)
    bias = Tensor(np.zeros(len(class_ids)), requires_grad=True)
    history = []
    for _ in range(steps):
        loss = -(log_softmax(x @ weight + bias, axis=1) * onehot).sum(axis=1).mean()
        weight.zero_grad()
        bias.zero_grad()
        loss.backward()
        weight.data -= lr * weight.grad
        bias.data -= lr * bias.grad
        history.append(loss.item())

    clf = DeceptionClassifier(
        weight=weight.data.copy(), bias=bias.data.copy(), center=center, scale=scale,
        class_ids=list(class_ids), bandwidth=bandwidth, history=history,
    )
    clf.accuracy = float(np.mean(clf.predict_descriptors(features) == labels))
    return clf


def train_deception_classifier(dataset, steps: int = 2000, lr: float = 0.5, persist: bool = True) -> DeceptionClassifier:
    """
    Fit the classifier on the descriptors of all real paintings.

    Warns with the final accuracy when the classes are poorly separable. When
    `persist` is set the classifier is stored in the dataset manifest.
    """
    class_ids = [style.id for style in dataset.classes]
    paintings = [p for c in class_ids for p in dataset.paintings_of(c)]
    bandwidth = dataset.codebook.bandwidth
    with no_grad():
        features = describe(np.stack([p.pixels for p in paintings]), bandwidth).data
    labels = np.array([p.class_id for p in paintings])

    clf = fit_softmax_regression(features, labels, class_ids, steps=steps, lr=lr, bandwidth=bandwidth)
    if clf.accuracy < MIN_ACCURACY:
        warnings.warn(
            f"style classifier reached only {clf.accuracy:.3f} training accuracy; classes may not be separable",
            DegenerateInputWarning,
            stacklevel=2,
        )
    if persist:
        dataset.manifest.classifier = clf.to_dict()
        if dataset.manifest.root is not None:
            dataset.manifest.save()
    return clf


def load_classifier(dataset) -> DeceptionClassifier:
    if not dataset.manifest.classifier:
        return train_deception_classifier(dataset)
    return DeceptionClassifier.from_dict(dataset.manifest.classifier)

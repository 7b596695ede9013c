"""
Evaluation metrics: joint-space scores, SSIM and deception rate.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.metrics import confusion_matrix

from errors import EvaluationError, ShapeError
from styleset.embedding import JointEmbedder, StyleRef
from styleset.synthetic import ImageSample
from tensor import no_grad


SSIM_WINDOW = 8
SSIM_STRIDE = 4
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
LUMA = np.array([0.299, 0.587, 0.114])


def _pixels(img) -> np.ndarray:
    return np.asarray(img.pixels if isinstance(img, ImageSample) else getattr(img, "data", img), dtype=np.float64)


def clip_scores(content, stylized, style: StyleRef, embedder: JointEmbedder) -> Tuple[float, float]:
    """
    Content and style scores in the joint space.

    s_cont = cos(E_I(content), E_I(stylized)); s_style = cos(E_T(style), E_I(stylized)).
    A style image without a known class is compared through its own embedding.
    """
    with no_grad():
        out = embedder.image(_pixels(stylized)).vec.data
        source = embedder.image(_pixels(content)).vec.data
        target_class = embedder.target_class(style)
        if target_class is None:
            target = embedder.image(style.image).vec.data
        else:
            target = embedder.anchors.vector(target_class)
    return float(np.dot(source, out)), float(np.dot(target, out))


def _gray(pixels: np.ndarray) -> np.ndarray:
    return np.tensordot(LUMA, pixels, axes=(0, 0)) if pixels.ndim == 3 else pixels


def ssim(image_a, image_b, window: int = SSIM_WINDOW, stride: int = SSIM_STRIDE) -> float:
    """
    Mean SSIM over uniform `window`×`window` windows placed every `stride`
    pixels on the luma channel; images smaller than the window use one global
    window.
    """
    a, b = _gray(_pixels(image_a)), _gray(_pixels(image_b))
    if a.shape != b.shape:
        raise ShapeError(f"ssim needs equal shapes, got {a.shape} and {b.shape}")
    if a.shape[0] < window or a.shape[1] < window:
        wa, wb = a[None, None], b[None, None]
    else:
        wa = sliding_window_view(a, (window, window))[::stride, ::stride]
        wb = sliding_window_view(b, (window, window))[::stride, ::stride]

    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    var_a = (wa * wa).mean(axis=(-1, -2)) - mu_a * mu_a
    var_b = (wb * wb).mean(axis=(-1, -2)) - mu_b * mu_b
    cov = (wa * wb).mean(axis=(-1, -2)) - mu_a * mu_b
    numerator = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    denominator = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(numerator / denominator))


def _predictions(stylized: Sequence[Tuple[object, int]], classifier) -> Tuple[np.ndarray, np.ndarray]:
    if len(stylized) == 0:
        raise EvaluationError("deception rate of an empty set of stylized images is undefined")
    images = [_pixels(image) for image, _ in stylized]
    targets = np.array([int(target) for _, target in stylized])
    return classifier.predict(images), targets


def deception_rate(stylized: Sequence[Tuple[object, int]], classifier) -> float:
    """Fraction of (image, target_class) pairs the classifier assigns to the target class."""
    predicted, targets = _predictions(stylized, classifier)
    return float(np.mean(predicted == targets))


def per_class_deception(
    stylized: Sequence[Tuple[object, int]],
    classifier,
    class_ids: Optional[List[int]] = None,
) -> Dict[int, float]:
    """Deception rate per target class, read off the confusion matrix."""
    predicted, targets = _predictions(stylized, classifier)
    labels = list(class_ids) if class_ids is not None else sorted(set(targets.tolist()) | set(predicted.tolist()))
    matrix = confusion_matrix(targets, predicted, labels=labels)
    totals = matrix.sum(axis=1)
    return {
        int(label): float(matrix[i, i] / totals[i])
        for i, label in enumerate(labels)
        if totals[i] > 0
    }

"""
Dataset calibration: how well style classes separate in descriptor and
embedding space.
"""

from itertools import combinations
from typing import Dict

import numpy as np

from styleset.descriptor import HUE_BINS, describe
from styleset.embedding import embed_array
from tensor import no_grad


def _descriptors(dataset, images) -> np.ndarray:
    with no_grad():
        return describe(np.stack([img.pixels for img in images]), dataset.codebook.bandwidth).data


def calibration_report(dataset) -> Dict[str, float]:
    """
    Separation statistics of a built dataset.

    Returns:
        Dict with
            min_descriptor_margin: smallest L2 distance between per-class mean descriptors
            same_class_cosine / cross_class_cosine: mean pairwise painting cosines
            cosine_gap: their difference
            diagonal_dominance: fraction of paintings whose closest anchor is their own class
            distinct_hue_pairs: class pairs whose mean hue histograms peak in different bins
    """
    classes = [style.id for style in dataset.classes]
    paintings = [p for c in classes for p in dataset.paintings_of(c)]
    labels = np.array([p.class_id for p in paintings])
    descriptors = _descriptors(dataset, paintings)
    embeddings = embed_array(paintings, dataset.codebook)

    means = {c: descriptors[labels == c].mean(axis=0) for c in classes}
    margin = min(
        (float(np.linalg.norm(means[a] - means[b])) for a, b in combinations(classes, 2)),
        default=0.0,
    )
    hue_peaks = {c: int(np.argmax(means[c][6:6 + HUE_BINS])) for c in classes}
    distinct = sum(hue_peaks[a] != hue_peaks[b] for a, b in combinations(classes, 2))

    cosines = embeddings @ embeddings.T
    same = labels[:, None] == labels[None, :]
    off_diagonal = ~np.eye(len(labels), dtype=bool)
    same_mean = float(cosines[same & off_diagonal].mean()) if np.any(same & off_diagonal) else 1.0
    cross_mean = float(cosines[~same].mean()) if np.any(~same) else 0.0

    anchors = dataset.anchors.matrix(classes)
    predicted = np.asarray(classes)[np.argmax(embeddings @ anchors.T, axis=1)]

    return {
        "min_descriptor_margin": margin,
        "same_class_cosine": same_mean,
        "cross_class_cosine": cross_mean,
        "cosine_gap": same_mean - cross_mean,
        "diagonal_dominance": float(np.mean(predicted == labels)),
        "distinct_hue_pairs": int(distinct),
        "class_pairs": len(classes) * (len(classes) - 1) // 2,
    }

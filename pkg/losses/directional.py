"""
Directional embedding loss.

The change from content to output image in the joint space should point the
same way as the change from the "photo" anchor to the target style anchor:

    L = 1 − cos(z_out − z_content, t_target − t_null)
"""

import warnings

import numpy as np

from errors import ConfigurationError, DegenerateInputWarning
from tensor import Tensor, as_tensor, l2_norm


def _vector(value) -> Tensor:
    return as_tensor(getattr(value, "vec", value))


def directional_clip_loss(z_out, z_content, t_target, t_null, eps: float = 1e-8) -> Tensor:
    """
    Args:
        z_out: Output image embedding(s), [D] or [B, D]; gradients flow through it
        z_content: Content image embedding(s)
        t_target: Target style anchor(s)
        t_null: Null ("photo") anchor
        eps: Degeneracy threshold on both directions

    Returns:
        Scalar loss in [0, 2], averaged over the batch

    Raises:
        ConfigurationError: If a target anchor equals the null anchor
    """
    delta_text = (_vector(t_target) - _vector(t_null)).detach()
    norm_text = np.linalg.norm(delta_text.data, axis=-1, keepdims=True)
    if np.any(norm_text < eps):
        raise ConfigurationError("target equals null style: the text direction has zero length")

    delta_image = _vector(z_out) - _vector(z_content)
    norm_image = l2_norm(delta_image, axis=-1, keepdims=True)
    degenerate = norm_image.data < eps
    if np.any(degenerate):
        warnings.warn(
            f"{int(degenerate.sum())} output embedding(s) equal their content embedding; loss taken as 1",
            DegenerateInputWarning,
            stacklevel=2,
        )
    keep = (~degenerate).astype(delta_image.dtype)
    cosine = (delta_image * delta_text).sum(axis=-1, keepdims=True) / (norm_image * norm_text + (1.0 - keep))
    return (1.0 - cosine * keep).mean()

"""
Differentiable hand-crafted style descriptor (S = 18).

Layout:
    [0:3]   per-channel means
    [3:6]   per-channel standard deviations
    [6:14]  chroma-weighted soft hue histogram (8 bins, bin 0 = red)
    [14:18] oriented gradient energies at 0°, 45°, 90°, 135°

Hue lives in the opponent plane a = R − (G + B)/2, b = (√3/2)(G − B). Each
pixel votes for every bin with weight exp(−(1 − cos δ)/bw²), normalized over
bins, where δ is the angle to the bin center; votes are weighted by chroma
a² + b², so gray pixels carry no weight and a fully gray image yields the
uniform histogram.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from styleset.synthetic import ImageSample
from tensor import Tensor, as_tensor, concat, conv2d


DESCRIPTOR_SIZE = 18
HUE_BINS = 8
DEFAULT_BANDWIDTH = 0.25
STAT_EPS = 1e-8
_CHROMA_FLOOR = 1e-12

GRADIENT_KERNELS = np.array([
    [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]],
    [[0.0, 1.0, 2.0], [-1.0, 0.0, 1.0], [-2.0, -1.0, 0.0]],
    [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]],
    [[-2.0, -1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 1.0, 2.0]],
])[:, None] / 8.0


@dataclass
class StyleDescriptor:
    stats: Tensor

    @property
    def means(self) -> np.ndarray:
        return self.stats.data[0:3]

    @property
    def stds(self) -> np.ndarray:
        return self.stats.data[3:6]

    @property
    def hue_histogram(self) -> np.ndarray:
        return self.stats.data[6:6 + HUE_BINS]

    @property
    def gradient_energy(self) -> np.ndarray:
        return self.stats.data[6 + HUE_BINS:]


def describe(pixels, bandwidth: float = DEFAULT_BANDWIDTH, eps: float = STAT_EPS) -> Tensor:
    """
    Batched descriptor.

    Args:
        pixels: [B, 3, H, W] (or [3, H, W]) in [0, 1]
        bandwidth: Hue kernel bandwidth in radians
        eps: Guard for standard deviations and empty histograms

    Returns:
        [B, 18] (or [18]) descriptor tensor, differentiable w.r.t. pixels
    """
    x = as_tensor(pixels)
    single = x.ndim == 3
    if single:
        x = x.unsqueeze(0)
    batch = x.shape[0]

    means = x.mean(axis=(2, 3))
    centered = x - means.reshape(batch, 3, 1, 1)
    variance = (centered * centered).mean(axis=(2, 3))
    stds = (variance + eps).sqrt() - np.sqrt(eps)

    red, green, blue = x[:, 0], x[:, 1], x[:, 2]
    opp_a = red - (green + blue) * 0.5
    opp_b = (green - blue) * (np.sqrt(3.0) / 2.0)
    chroma = opp_a * opp_a + opp_b * opp_b
    radius = (chroma + _CHROMA_FLOOR).sqrt().unsqueeze(-1)
    centers = 2.0 * np.pi * np.arange(HUE_BINS) / HUE_BINS
    cos_delta = (opp_a.unsqueeze(-1) * np.cos(centers) + opp_b.unsqueeze(-1) * np.sin(centers)) / radius
    votes = ((cos_delta - 1.0) * (1.0 / bandwidth ** 2)).exp()
    votes = votes / votes.sum(axis=-1, keepdims=True)
    weighted = (votes * chroma.unsqueeze(-1)).sum(axis=(1, 2))
    total = chroma.sum(axis=(1, 2)).unsqueeze(-1)
    histogram = (weighted + eps / HUE_BINS) / (total + eps)

    gray = (red * 0.299 + green * 0.587 + blue * 0.114).unsqueeze(1)
    response = conv2d(gray, GRADIENT_KERNELS.astype(x.dtype), pad=0)
    energy = (response * response).mean(axis=(2, 3))

    out = concat([means, stds, histogram, energy], axis=1)
    return out[0] if single else out


def style_descriptor(img: Union[ImageSample, Tensor, np.ndarray], bandwidth: float = DEFAULT_BANDWIDTH) -> StyleDescriptor:
    pixels = img.pixels if isinstance(img, ImageSample) else img
    return StyleDescriptor(stats=describe(pixels, bandwidth))

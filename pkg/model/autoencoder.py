"""
Convolutional content encoder and its mirrored decoder.
"""

from dataclasses import dataclass
from typing import List

from errors import ShapeError
from model.layers import Conv2d, Module
from tensor import RngStream, Tensor, as_tensor, avg_pool2d, upsample_nearest


# tap indices used by the style (Gram) and content losses
STYLE_TAPS = (0, 1, 2, 3)
CONTENT_TAPS = (1, 2)


@dataclass
class EncoderOutput:
    """Bottleneck feature map plus the intermediate activations used as loss taps."""
    features: Tensor          # [B, d, H/4, W/4]
    taps: List[Tensor]        # block1, block2, block3, pooled block3

    def select(self, indices) -> List[Tensor]:
        return [self.taps[i] for i in indices]


class Encoder(Module):
    """Three conv blocks (3x3 conv + relu), strides 1, 2, 2, channels 3→16→32→d."""

    def __init__(self, channels: int, rng: RngStream):
        self.channels = channels
        self.block1 = Conv2d(3, 16, rng.split(0), stride=1)
        self.block2 = Conv2d(16, 32, rng.split(1), stride=2)
        self.block3 = Conv2d(32, channels, rng.split(2), stride=2)

    def forward(self, images) -> EncoderOutput:
        x = as_tensor(images)
        if x.ndim == 3:
            x = x.unsqueeze(0)
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"encoder expects [B,3,H,W] images, got {x.shape}")
        if x.shape[2] % 4 or x.shape[3] % 4:
            raise ShapeError(f"image sides must be multiples of 4, got {x.shape[2]}x{x.shape[3]}")
        f1 = self.block1(x).relu()
        f2 = self.block2(f1).relu()
        f3 = self.block3(f2).relu()
        h, w = f3.shape[2], f3.shape[3]
        pooled = avg_pool2d(f3, 2) if h % 2 == 0 and w % 2 == 0 else f3
        return EncoderOutput(features=f3, taps=[f1, f2, f3, pooled])


class Decoder(Module):
    """Mirror of the encoder: conv, nearest ×2, conv, nearest ×2, conv, sigmoid."""

    def __init__(self, channels: int, rng: RngStream):
        self.block1 = Conv2d(channels, 32, rng.split(0))
        self.block2 = Conv2d(32, 16, rng.split(1))
        self.block3 = Conv2d(16, 3, rng.split(2))

    def forward(self, features: Tensor) -> Tensor:
        x = self.block1(features).relu()
        x = self.block2(upsample_nearest(x, 2)).relu()
        x = self.block3(upsample_nearest(x, 2))
        return x.sigmoid()

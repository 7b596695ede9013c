"""
The stylization network: encoder → style fusion → decoder.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from errors import ConfigurationError
from model.autoencoder import Decoder, Encoder, EncoderOutput
from model.fusion import FusionStack, FusionTag, parse_tag
from model.layers import Module, Parameter
from styleset.embedding import Embedding, JointEmbedder, StyleRef
from styleset.synthetic import ImageRole, ImageSample
from tensor import RngStream, Tensor, as_tensor, no_grad


@dataclass
class NetworkConfig:
    """Shape of a StyleNet."""
    channels: int = 64                  # d, bottleneck channels
    state_size: int = 8                 # n, SSM state per channel
    embed_dim: int = 64                 # D, joint embedding dimension
    fusion_variant: str = FusionTag.SSM_ADALN.value
    fusion_depth: int = 2
    seed: int = 0

    def validate(self):
        parse_tag(self.fusion_variant)
        if self.channels < 1 or self.state_size < 1 or self.embed_dim < 1:
            raise ConfigurationError(f"network dimensions must be positive: {self}")


class StyleNet(Module):
    """
    Content encoder, fusion stack and decoder.

    Stage 1 trains encoder and decoder with the fusion bypassed; stage 2
    freezes the encoder and trains decoder and fusion.
    """

    def __init__(self, config: Optional[NetworkConfig] = None):
        self.config = config or NetworkConfig()
        self.config.validate()
        rng = RngStream(self.config.seed)
        self.encoder = Encoder(self.config.channels, rng.split(0))
        self.decoder = Decoder(self.config.channels, rng.split(1))
        self.fusion = FusionStack(
            self.config.fusion_variant,
            channels=self.config.channels,
            state_size=self.config.state_size,
            embed_dim=self.config.embed_dim,
            depth=self.config.fusion_depth,
            rng=rng.split(2),
        )

    @property
    def tag(self) -> FusionTag:
        return self.fusion.tag

    def encode(self, images) -> EncoderOutput:
        return self.encoder(images)

    def fuse(self, features: Tensor, z=None) -> Tensor:
        """Fusion stack, or the identity when no style is given."""
        return features if z is None else self.fusion(features, z)

    def decode(self, features: Tensor) -> Tensor:
        return self.decoder(features)

    def forward(self, images, z=None) -> Tensor:
        return self.decode(self.fuse(self.encode(images).features, z))

    def trainable_parameters(self, stage: int) -> List[Parameter]:
        if stage == 1:
            return self.encoder.parameters() + self.decoder.parameters()
        if stage == 2:
            return self.decoder.parameters() + self.fusion.parameters()
        raise ConfigurationError(f"stage must be 1 or 2, got {stage}")


def stylize(content: ImageSample, style: StyleRef, net: StyleNet, embedder: JointEmbedder) -> ImageSample:
    """
    Render `content` in the style indicated by a class label or a style image.

    Raises:
        StyleLookupError: If a text style names an unknown class
    """
    z: Embedding = embedder.embed(style)
    with no_grad():
        out = net(as_tensor(content.pixels).unsqueeze(0), z.vec.detach())
    return ImageSample(
        pixels=np.clip(out.data[0], 0.0, 1.0),
        role=ImageRole.STYLIZED,
        class_id=embedder.target_class(style),
        content_id=content.content_id,
    )

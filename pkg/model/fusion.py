"""
Style fusion: inject a style embedding into a content feature map.

A fusion stack flattens the feature map [B, d, h, w] row-major into tokens
[B, L=h·w, d], runs `depth` blocks conditioned on the embedding, and reshapes
back. Each variant is a token mixer (ssm, attn, linattn) wrapped in one of two
conditioning skeletons:

adaLN (gates zero at init, so the block starts as the identity):
    u  = LN(x)(1 + gamma1) + beta1
    h1 = x + gate1 · mixer(u)
    y  = h1 + gate2 · MLP(LN(h1)(1 + gamma2) + beta2)

AdaIN (per-channel statistics over the L positions):
    h1 = AdaIN1(mixer(x))
    y  = AdaIN2(h1 + MLP(h1))
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple, Union

from errors import ConfigurationError, ShapeError
from model.layers import MLP, Module
from model.mixers import build_mixer
from tensor import RngStream, Tensor, as_tensor, layer_norm, standardize


class FusionTag(str, Enum):
    SSM_ADALN = "ssm_adaln"
    SSM_ADAIN = "ssm_adain"
    ATTN_ADALN = "attn_adaln"
    ATTN_ADAIN = "attn_adain"
    LINATTN_ADALN = "linattn_adaln"
    LINATTN_ADAIN = "linattn_adain"

    @property
    def mixer(self) -> str:
        return self.value.split("_")[0]

    @property
    def conditioning(self) -> str:
        return self.value.split("_")[1]


# the three variants compared head to head
PRIMARY_TAGS: Tuple[FusionTag, ...] = (FusionTag.SSM_ADALN, FusionTag.ATTN_ADAIN, FusionTag.LINATTN_ADALN)


def parse_tag(tag: Union[FusionTag, str]) -> FusionTag:
    try:
        return FusionTag(tag)
    except ValueError as exc:
        raise ConfigurationError(
            f"unknown fusion variant '{tag}', expected one of {[t.value for t in FusionTag]}"
        ) from exc


@dataclass
class FusionConditioning:
    """Per-block modulation vectors, each [B, 1, d] so they broadcast over tokens."""
    gamma1: Tensor
    beta1: Tensor
    gate1: Tensor
    gamma2: Tensor
    beta2: Tensor
    gate2: Tensor

    @classmethod
    def split(cls, raw: Tensor, channels: int) -> "FusionConditioning":
        chunks = [raw[:, i * channels:(i + 1) * channels].unsqueeze(-2) for i in range(6)]
        return cls(*chunks)


class ConditioningMLP(Module):
    """D → 4d (tanh) → chunks·d regressor; selected output chunks start at zero."""

    def __init__(self, embed_dim: int, channels: int, chunks: int, rng: RngStream, zero_chunks: Sequence[int] = ()):
        self.channels = channels
        self.net = MLP([embed_dim, 4 * channels, chunks * channels], rng, activation="tanh")
        head = self.net.layers[-1]
        for c in zero_chunks:
            head.weight.data[:, c * channels:(c + 1) * channels] = 0.0
            head.bias.data[c * channels:(c + 1) * channels] = 0.0

    def forward(self, z: Tensor) -> Tensor:
        return self.net(z)


def adain(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each channel over the token axis, then apply (1 + scale) and shift."""
    return standardize(x, axis=-2, eps=eps) * (scale + 1.0) + shift


class AdaLNBlock(Module):
    def __init__(self, mixer: str, channels: int, state_size: int, embed_dim: int, rng: RngStream):
        self.channels = channels
        self.conditioning = ConditioningMLP(embed_dim, channels, 6, rng.split(0), zero_chunks=(2, 5))
        self.mixer = build_mixer(mixer, channels, state_size, rng.split(1))
        self.mlp = MLP([channels, 2 * channels, channels], rng.split(2), activation="tanh")

    def modulation(self, z: Tensor) -> FusionConditioning:
        return FusionConditioning.split(self.conditioning(z), self.channels)

    def forward(self, x: Tensor, z: Tensor) -> Tensor:
        c = self.modulation(z)
        u = layer_norm(x) * (c.gamma1 + 1.0) + c.beta1
        h1 = x + c.gate1 * self.mixer(u)
        v = layer_norm(h1) * (c.gamma2 + 1.0) + c.beta2
        return h1 + c.gate2 * self.mlp(v)


class AdaINBlock(Module):
    """
    Mixer, AdaIN, MLP residual, second AdaIN:

        h1 = AdaIN(mixer(x); s1, b1), out = AdaIN(h1 + MLP(h1); s2, b2)

    The regressor emits four d-wide chunks (s1, b1, s2, b2) instead of a
    single scale and shift. The second AdaIN and the d→2d→d MLP give the block
    the two-branch shape of AdaLNBlock, so the adain and adaln variants of one
    mixer differ only in conditioning. An attn mixer adds its own O projection
    and d→4d→d FFN (see AttentionMixer).
    """

    def __init__(self, mixer: str, channels: int, state_size: int, embed_dim: int, rng: RngStream):
        self.channels = channels
        self.conditioning = ConditioningMLP(embed_dim, channels, 4, rng.split(0))
        self.mixer = build_mixer(mixer, channels, state_size, rng.split(1))
        self.mlp = MLP([channels, 2 * channels, channels], rng.split(2), activation="tanh")

    def modulation(self, z: Tensor) -> List[Tensor]:
        raw = self.conditioning(z)
        d = self.channels
        return [raw[:, i * d:(i + 1) * d].unsqueeze(-2) for i in range(4)]

    def forward(self, x: Tensor, z: Tensor) -> Tensor:
        scale1, shift1, scale2, shift2 = self.modulation(z)
        h1 = adain(self.mixer(x), scale1, shift1)
        return adain(h1 + self.mlp(h1), scale2, shift2)


class FusionStack(Module):
    """A stack of `depth` fusion blocks of one variant."""

    def __init__(
        self,
        tag: Union[FusionTag, str],
        channels: int = 64,
        state_size: int = 8,
        embed_dim: int = 64,
        depth: int = 2,
        rng: RngStream = None,
    ):
        if depth < 1:
            raise ConfigurationError(f"fusion depth must be >= 1, got {depth}")
        self.tag = parse_tag(tag)
        self.channels = channels
        self.state_size = state_size
        self.embed_dim = embed_dim
        self.depth = depth
        rng = rng or RngStream(0)
        block = AdaLNBlock if self.tag.conditioning == "adaln" else AdaINBlock
        self.blocks = [
            block(self.tag.mixer, channels, state_size, embed_dim, rng.split(i)) for i in range(depth)
        ]

    def forward(self, features: Tensor, z) -> Tensor:
        """
        Args:
            features: Content feature map [B, d, h, w] or [d, h, w]
            z: Style embedding [B, D], [D], or an Embedding

        Returns:
            Fused feature map with the shape of `features`
        """
        features = as_tensor(features)
        z = as_tensor(getattr(z, "vec", z))
        single = features.ndim == 3
        if single:
            features = features.unsqueeze(0)
        if z.ndim == 1:
            z = z.unsqueeze(0)
        if features.ndim != 4 or features.shape[1] != self.channels:
            raise ShapeError(f"fusion expects [B,{self.channels},h,w] features, got {features.shape}")
        if z.shape[-1] != self.embed_dim:
            raise ShapeError(f"style embedding has dimension {z.shape[-1]}, fusion expects {self.embed_dim}")
        if z.shape[0] not in (1, features.shape[0]):
            raise ShapeError(f"{z.shape[0]} embeddings for a batch of {features.shape[0]} feature maps")

        b, d, h, w = features.shape
        tokens = features.transpose(0, 2, 3, 1).reshape(b, h * w, d)
        for block in self.blocks:
            tokens = block(tokens, z)
        out = tokens.reshape(b, h, w, d).transpose(0, 3, 1, 2)
        return out[0] if single else out


def build_fusion(
    tag: Union[FusionTag, str],
    channels: int = 64,
    state_size: int = 8,
    embed_dim: int = 64,
    depth: int = 2,
    seed: int = 0,
) -> FusionStack:
    return FusionStack(tag, channels, state_size, embed_dim, depth, RngStream(seed).split(2))


def _fuse(expected: FusionTag, x: Tensor, z, stack: FusionStack) -> Tensor:
    if stack.tag is not expected:
        raise ConfigurationError(f"fusion stack is '{stack.tag.value}', not '{expected.value}'")
    return stack(x, z)


def fuse_ssm_adaln(x: Tensor, z, stack: FusionStack) -> Tensor:
    return _fuse(FusionTag.SSM_ADALN, x, z, stack)


def fuse_attn_adain(x: Tensor, z, stack: FusionStack) -> Tensor:
    return _fuse(FusionTag.ATTN_ADAIN, x, z, stack)


def fuse_linattn_adaln(x: Tensor, z, stack: FusionStack) -> Tensor:
    return _fuse(FusionTag.LINATTN_ADALN, x, z, stack)

"""
Token mixers used inside the style-fusion blocks.

All mixers map [..., L, d] to [..., L, d] and use no positional information.
"""

from typing import Dict, Type

import numpy as np

from errors import ConfigurationError
from model.layers import Linear, MLP, Module
from model.ssm import SsmParams, bidirectional_scan
from tensor import RngStream, Tensor, is_grad_enabled, softmax
from tensor.tensor import record_allocation


ATTENTION_CHUNK_ROWS = 1024


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    scale = 1.0 / np.sqrt(q.shape[-1])
    return softmax((q @ k.swapaxes(-1, -2)) * scale, axis=-1)


def dot_product_attention(q: Tensor, k: Tensor, v: Tensor, chunk_rows: int = ATTENTION_CHUNK_ROWS) -> Tensor:
    """
    Single-head scaled dot-product attention, O(L²).

    Without a graph (inference), long sequences are processed in blocks of
    `chunk_rows` query rows so the L×L score matrix is never materialized.
    """
    length = q.shape[-2]
    if is_grad_enabled() or length <= chunk_rows:
        return attention_weights(q, k) @ v

    scale = 1.0 / np.sqrt(q.shape[-1])
    keys = np.swapaxes(k.data, -1, -2)
    out = np.empty(q.shape[:-1] + (v.shape[-1],), dtype=q.dtype)
    for start in range(0, length, chunk_rows):
        stop = min(start + chunk_rows, length)
        scores = (q.data[..., start:stop, :] @ keys) * scale
        scores -= scores.max(axis=-1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=-1, keepdims=True)
        out[..., start:stop, :] = scores @ v.data
    record_allocation(min(chunk_rows, length) * length * int(np.prod(q.shape[:-2], dtype=np.int64)))
    return Tensor(out)


def feature_map(u: Tensor) -> Tensor:
    """φ(u) = elu(u) + 1, strictly positive."""
    return u.elu() + 1.0


def linear_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """
    Non-causal kernelized attention, O(L·d²):

        out_i = Σ_j (φ(q_i)·φ(k_j)) v_j / Σ_j φ(q_i)·φ(k_j)
    """
    phi_q, phi_k = feature_map(q), feature_map(k)
    kv = phi_k.swapaxes(-1, -2) @ v
    normalizer = phi_q @ phi_k.sum(axis=-2, keepdims=True).swapaxes(-1, -2)
    return (phi_q @ kv) / normalizer


class SsmMixer(Module):
    """Bidirectional selective scan."""

    def __init__(self, channels: int, state_size: int, rng: RngStream):
        self.ssm = SsmParams(channels, state_size, rng)

    def forward(self, u: Tensor) -> Tensor:
        return bidirectional_scan(u, self.ssm)


class AttentionMixer(Module):
    """
    Softmax self-attention followed by a position-wise feed-forward layer.

    out = o + FFN(o), o = O(attention(Q u, K u, V u)), FFN is d→4d→d.

    The O projection and the FFN are part of the mixer in every attn variant.
    With them, attention has more parameters than the linattn and ssm mixers
    at the same width.
    """

    def __init__(self, channels: int, state_size: int, rng: RngStream):
        self.query = Linear(channels, channels, rng.split(0))
        self.key = Linear(channels, channels, rng.split(1))
        self.value = Linear(channels, channels, rng.split(2))
        self.output = Linear(channels, channels, rng.split(3))
        self.ffn = MLP([channels, 4 * channels, channels], rng.split(4), activation="tanh")

    def weights(self, u: Tensor) -> Tensor:
        return attention_weights(self.query(u), self.key(u))

    def forward(self, u: Tensor) -> Tensor:
        mixed = self.output(dot_product_attention(self.query(u), self.key(u), self.value(u)))
        return mixed + self.ffn(mixed)


class LinearAttentionMixer(Module):
    """Kernelized linear attention with φ = elu + 1."""

    def __init__(self, channels: int, state_size: int, rng: RngStream):
        self.query = Linear(channels, channels, rng.split(0))
        self.key = Linear(channels, channels, rng.split(1))
        self.value = Linear(channels, channels, rng.split(2))

    def forward(self, u: Tensor) -> Tensor:
        return linear_attention(self.query(u), self.key(u), self.value(u))


MIXERS: Dict[str, Type[Module]] = {
    "ssm": SsmMixer,
    "attn": AttentionMixer,
    "linattn": LinearAttentionMixer,
}


def build_mixer(kind: str, channels: int, state_size: int, rng: RngStream) -> Module:
    if kind not in MIXERS:
        raise ConfigurationError(f"unknown mixer '{kind}', expected one of {sorted(MIXERS)}")
    return MIXERS[kind](channels, state_size, rng)

"""
Stylization network: conv encoder/decoder and interchangeable style-fusion stacks.
"""

from model.autoencoder import CONTENT_TAPS, STYLE_TAPS, Decoder, Encoder, EncoderOutput
from model.checkpoint import Checkpoint, CheckpointHeader
from model.fusion import (
    PRIMARY_TAGS,
    FusionConditioning,
    FusionStack,
    FusionTag,
    build_fusion,
    fuse_attn_adain,
    fuse_linattn_adaln,
    fuse_ssm_adaln,
    parse_tag,
)
from model.layers import MLP, Conv2d, Linear, Module, Parameter
from model.network import NetworkConfig, StyleNet, stylize
from model.ssm import ScanDirection, SsmParams, bidirectional_scan, ssm_scan

__all__ = [
    "CONTENT_TAPS",
    "Checkpoint",
    "CheckpointHeader",
    "Conv2d",
    "Decoder",
    "Encoder",
    "EncoderOutput",
    "FusionConditioning",
    "FusionStack",
    "FusionTag",
    "Linear",
    "MLP",
    "Module",
    "NetworkConfig",
    "PRIMARY_TAGS",
    "Parameter",
    "STYLE_TAPS",
    "ScanDirection",
    "SsmParams",
    "StyleNet",
    "bidirectional_scan",
    "build_fusion",
    "fuse_attn_adain",
    "fuse_linattn_adaln",
    "fuse_ssm_adaln",
    "parse_tag",
    "ssm_scan",
    "stylize",
]

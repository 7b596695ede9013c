"""
Synthetic "artists and paintings" dataset and the joint text/image embedding space.
"""

from styleset.calibration import calibration_report
from styleset.dataset import (
    DatasetConfig,
    DatasetManifest,
    StyleDataset,
    build_dataset,
    build_from_config,
    load_dataset,
)
from styleset.descriptor import DESCRIPTOR_SIZE, StyleDescriptor, describe, style_descriptor
from styleset.embedding import (
    AnchorTable,
    Embedding,
    EmbeddingSource,
    JointEmbedder,
    ProjectionMatrix,
    StyleRef,
    calibrate_anchors,
    compute_anchors,
    embed_array,
    encode_image,
    encode_images,
    encode_text,
    export_embeddings_csv,
)
from styleset.synthetic import (
    NULL_CLASS,
    NULL_CLASS_ID,
    ImageRole,
    ImageSample,
    StyleClass,
    apply_style,
    class_name,
    load_png,
    quantize,
    render_content,
    sample_style_classes,
    save_png,
)

__all__ = [
    "AnchorTable",
    "DESCRIPTOR_SIZE",
    "DatasetConfig",
    "DatasetManifest",
    "Embedding",
    "EmbeddingSource",
    "ImageRole",
    "ImageSample",
    "JointEmbedder",
    "NULL_CLASS",
    "NULL_CLASS_ID",
    "ProjectionMatrix",
    "StyleClass",
    "StyleDataset",
    "StyleDescriptor",
    "StyleRef",
    "apply_style",
    "build_dataset",
    "build_from_config",
    "calibrate_anchors",
    "calibration_report",
    "class_name",
    "compute_anchors",
    "describe",
    "embed_array",
    "encode_image",
    "encode_images",
    "encode_text",
    "export_embeddings_csv",
    "load_dataset",
    "load_png",
    "quantize",
    "render_content",
    "sample_style_classes",
    "save_png",
    "style_descriptor",
]

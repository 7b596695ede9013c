"""
Procedural "artists and paintings".

Content images are seeded compositions of colored shapes on gradient
backgrounds. A style class is a small set of image-space parameters (hue
rotation, contrast, oriented sinusoidal texture); a painting is a content
image with its class's style applied.
"""

import colorsys
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from PIL import Image, ImageDraw

from errors import UsageError
from tensor import RngStream


NULL_CLASS_ID = -1

# content palettes sit in a narrow blue-green band so hue rotations stand out
BACKGROUND_HUES = (0.45, 0.60)
SHAPE_HUES = (0.25, 0.70)


class ImageRole(str, Enum):
    CONTENT = "content"
    PAINTING = "painting"
    STYLIZED = "stylized"


@dataclass(frozen=True)
class StyleClass:
    """An artist stand-in: the parameters of its characteristic image style."""
    id: int
    name: str
    hue_shift: float = 0.0        # radians
    contrast: float = 1.0         # gain around the image mean
    orientation: float = 0.0      # texture direction, radians
    frequency: float = 0.0        # texture cycles per image
    amplitude: float = 0.0        # texture amplitude

    @property
    def is_null(self) -> bool:
        return self.id == NULL_CLASS_ID

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "hue_shift": self.hue_shift,
            "contrast": self.contrast,
            "orientation": self.orientation,
            "frequency": self.frequency,
            "amplitude": self.amplitude,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StyleClass":
        return cls(**data)


NULL_CLASS = StyleClass(id=NULL_CLASS_ID, name="photo")


def class_name(class_id: int) -> str:
    return NULL_CLASS.name if class_id == NULL_CLASS_ID else f"style-{class_id}"


@dataclass
class ImageSample:
    """
    An RGB image with its provenance.

    Attributes:
        pixels: float array [3, H, W] in [0, 1]
        role: content, painting or stylized
        class_id: Style class of paintings and stylized images
        content_id: Id of the underlying content image
        index: Painting index within its class
    """
    pixels: np.ndarray
    role: ImageRole = ImageRole.CONTENT
    class_id: Optional[int] = None
    content_id: int = 0
    index: int = 0

    @property
    def size(self) -> int:
        return self.pixels.shape[-1]

    @property
    def filename(self) -> str:
        if self.role is ImageRole.CONTENT:
            return f"content_{self.content_id}.png"
        if self.role is ImageRole.PAINTING:
            return f"painting_{self.class_id}_{self.index}.png"
        return f"stylized_{self.class_id}_{self.content_id}.png"


def quantize(pixels: np.ndarray) -> np.ndarray:
    """Round to the 8-bit grid exactly as a PNG round trip does."""
    return to_uint8(pixels).astype(np.float64) / 255.0


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_png(pixels: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(pixels).transpose(1, 2, 0)).save(path)
    return path


def load_png(path: Union[str, Path]) -> np.ndarray:
    with Image.open(path) as img:
        data = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return data.transpose(2, 0, 1).astype(np.float64) / 255.0


def sample_style_classes(num_classes: int, rng: RngStream) -> List[StyleClass]:
    """
    Draw class parameters stratified over their ranges so every pair differs.

    Hue shifts are spread over a permutation of C equal sectors of the circle
    (kept away from 0), orientations over C sectors of [0, π).
    """
    draws = rng.uniform(0.0, 1.0, (num_classes, 5))
    hue_order = rng.permutation(num_classes)
    classes = []
    for c in range(num_classes):
        u = draws[c]
        classes.append(StyleClass(
            id=c,
            name=class_name(c),
            hue_shift=float(2.0 * np.pi * (hue_order[c] + 0.25 + 0.5 * u[0]) / num_classes),
            contrast=float(0.6 + 1.0 * u[1]),
            orientation=float(np.pi * (c + u[2]) / num_classes),
            frequency=float(3.0 + 5.0 * u[3]),
            amplitude=float(0.06 + 0.09 * u[4]),
        ))
    return classes


def _hsv(rng: RngStream, hues, saturation=(0.35, 0.85), value=(0.35, 0.95)) -> tuple:
    h, s, v = rng.uniform(*hues), rng.uniform(*saturation), rng.uniform(*value)
    return colorsys.hsv_to_rgb(h, s, v)


def render_content(content_id: int, size: int, rng: RngStream) -> ImageSample:
    """3-8 filled shapes (rectangles, ellipses, triangles) over a two-color gradient."""
    top = np.array(_hsv(rng, BACKGROUND_HUES))
    bottom = np.array(_hsv(rng, BACKGROUND_HUES))
    ramp = np.linspace(0.0, 1.0, size)[:, None, None]
    background = (1.0 - ramp) * top + ramp * bottom
    canvas = Image.fromarray(to_uint8(np.broadcast_to(background, (size, size, 3))))
    draw = ImageDraw.Draw(canvas)

    for _ in range(int(rng.integers(3, 9))):
        kind = int(rng.integers(0, 3))
        color = tuple(int(round(255 * c)) for c in _hsv(rng, SHAPE_HUES))
        w, h = rng.integers(size // 8, size // 2 + 1, 2)
        x0, y0 = rng.integers(-(size // 8), size, 2)
        box = [int(x0), int(y0), int(x0 + w), int(y0 + h)]
        if kind == 0:
            draw.rectangle(box, fill=color)
        elif kind == 1:
            draw.ellipse(box, fill=color)
        else:
            draw.polygon([(box[0], box[3]), ((box[0] + box[2]) // 2, box[1]), (box[2], box[3])], fill=color)

    pixels = np.asarray(canvas, dtype=np.uint8).transpose(2, 0, 1).astype(np.float64) / 255.0
    return ImageSample(pixels=pixels, role=ImageRole.CONTENT, content_id=content_id)


def hue_rotation(angle: float) -> np.ndarray:
    """RGB rotation by `angle` about the gray axis (1, 1, 1)/√3."""
    axis = np.ones(3) / np.sqrt(3.0)
    cross = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    return np.cos(angle) * np.eye(3) + np.sin(angle) * cross + (1.0 - np.cos(angle)) * np.outer(axis, axis)


def texture(style: StyleClass, size: int) -> np.ndarray:
    coords = np.arange(size) / size
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    phase = 2.0 * np.pi * style.frequency * (xx * np.cos(style.orientation) + yy * np.sin(style.orientation))
    return style.amplitude * np.sin(phase)


def apply_style(img: ImageSample, style: StyleClass, strength: float = 1.0) -> ImageSample:
    """
    Paint a content image in a class's style.

    Hue rotation by strength·θ, contrast gain 1 + strength·(γ − 1) around the
    image mean, additive oriented texture scaled by strength, then clamping.
    The null class and strength 0 return the pixels unchanged.
    """
    if img.role is not ImageRole.CONTENT:
        raise UsageError(f"apply_style needs a content image, got role '{img.role.value}'")
    if not 0.0 <= strength <= 1.0:
        raise UsageError(f"style strength must lie in [0, 1], got {strength}")
    painting = replace(img, role=ImageRole.PAINTING, class_id=style.id)
    if style.is_null or strength == 0.0:
        painting.pixels = img.pixels.copy()
        return painting

    rotated = np.einsum("ij,jhw->ihw", hue_rotation(strength * style.hue_shift), img.pixels)
    mean = rotated.mean()
    gain = 1.0 + strength * (style.contrast - 1.0)
    styled = (rotated - mean) * gain + mean + strength * texture(style, img.pixels.shape[-1])[None]
    painting.pixels = np.clip(styled, 0.0, 1.0)
    return painting
